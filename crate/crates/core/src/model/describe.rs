use std::fmt::Write;

use crate::model::network::Autoencoder;
use crate::nn::{Layer, Real};

fn layer_label<T: Real>(layer: &Layer<T>) -> String {
    match layer {
        Layer::Conv(p) | Layer::ConvTranspose(p) => {
            let s = p.kernels.shape();
            let (cin, cout) = match layer {
                Layer::Conv(_) => (s[1], s[0]),
                _ => (s[0], s[1]),
            };
            format!(
                "{}({cin}, {cout}, k={}, pad={}, stride={})",
                layer.name(),
                s[2],
                p.padding,
                p.stride
            )
        }
        Layer::MaxPool { window } => format!("MaxPool2d({window}, {window})"),
        Layer::Linear(p) => format!("Linear({}, {})", p.in_features(), p.out_features()),
        Layer::LeakyRelu { slope } => format!("LeakyReLU({slope})"),
        Layer::Unflatten { shape } => format!("Unflatten{shape:?}"),
        other => other.name().to_string(),
    }
}

/// Graphviz DOT rendering of the block graph: one node per block, edges in
/// execution order, labels carrying the layers and each block's output shape.
pub fn describe_model<T: Real>(model: &Autoencoder<T>) -> String {
    let shapes = model
        .shape_trace()
        .expect("model shapes are validated at construction");
    let mut dot = String::from(
        "digraph autoencoder {\n  rankdir=TB;\n  node [shape=box, fontname=\"Helvetica\"];\n",
    );
    for (i, (block, shape)) in model.blocks.iter().zip(&shapes).enumerate() {
        let layers: Vec<String> = block.layers.iter().map(layer_label).collect();
        let mut label = format!("{}\\n{}\\n-> {:?}", block.name, layers.join("\\n"), shape);
        if i == 0 {
            label = format!("input {:?}\\n{label}", model.input_shape);
        }
        let style = if block.is_counted() {
            ""
        } else {
            ", style=dashed"
        };
        writeln!(dot, "  b{i} [label=\"{label}\"{style}];").unwrap();
    }
    for i in 1..model.blocks.len() {
        writeln!(dot, "  b{} -> b{i};", i - 1).unwrap();
    }
    dot.push_str("}\n");
    dot
}
