//! Class maps (PNG), latent scatter plots and loss curves (SVG).

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use image::{ImageBuffer, Rgb};

use crate::error::{Error, Result};
use crate::fcm::{argmax, Matrix};

pub type Color = [u8; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct Palette {
    pub colors: Vec<Color>,
    pub background: Color,
}

/// Tableau 10.
pub const DEFAULT_COLORS: [Color; 10] = [
    [0x4e, 0x79, 0xa7],
    [0xf2, 0x8e, 0x2b],
    [0xe1, 0x57, 0x59],
    [0x76, 0xb7, 0xb2],
    [0x59, 0xa1, 0x4f],
    [0xed, 0xc9, 0x48],
    [0xb0, 0x7a, 0xa1],
    [0xff, 0x9d, 0xa7],
    [0x9c, 0x75, 0x5f],
    [0xba, 0xb0, 0xac],
];

impl Default for Palette {
    fn default() -> Self {
        Self {
            colors: DEFAULT_COLORS.to_vec(),
            background: [0xff, 0xff, 0xff],
        }
    }
}

pub fn hex(c: Color) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn parse_hex(s: &str) -> Result<Color> {
    let t = s.trim().trim_start_matches('#');
    let bad = || Error::InvalidArgument(format!("bad colour {s:?}, expected #rrggbb"));
    if t.len() != 6 {
        return Err(bad());
    }
    let byte = |i: usize| u8::from_str_radix(&t[i..i + 2], 16).map_err(|_| bad());
    Ok([byte(0)?, byte(2)?, byte(4)?])
}

impl Palette {
    pub fn new(colors: Vec<Color>, background: Color) -> Result<Self> {
        for (i, a) in colors.iter().enumerate() {
            if colors[..i].contains(a) {
                return Err(Error::InvalidArgument(format!(
                    "palette repeats colour {}",
                    hex(*a)
                )));
            }
        }
        if colors.is_empty() {
            return Err(Error::InvalidArgument(
                "palette needs at least one colour".into(),
            ));
        }
        Ok(Self { colors, background })
    }

    pub fn color(&self, class: usize) -> Result<Color> {
        self.colors.get(class).copied().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "palette has {} colours, class {} requested",
                self.colors.len(),
                class + 1
            ))
        })
    }
}

/// Comma-separated `#rrggbb` list; the background stays white.
impl FromStr for Palette {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "default" {
            return Ok(Palette::default());
        }
        let colors = s.split(',').map(parse_hex).collect::<Result<Vec<_>>>()?;
        Palette::new(colors, Palette::default().background)
    }
}

/// Footprint of one tile in slide pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placement {
    pub x: usize,
    pub y: usize,
    pub side: usize,
}

/// Per-pixel class, `None` where no tile lands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMap {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<Option<u16>>,
    pub class_count: usize,
}

impl ClassMap {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<u16> {
        self.classes[y * self.width + x]
    }

    pub fn save_png(&self, palette: &Palette, path: &Path) -> Result<()> {
        if palette.colors.len() < self.class_count {
            return Err(Error::InvalidArgument(format!(
                "palette has {} colours for {} classes",
                palette.colors.len(),
                self.class_count
            )));
        }
        let buf: Vec<u8> = self
            .classes
            .iter()
            .flat_map(|c| c.map_or(palette.background, |k| palette.colors[k as usize]))
            .collect();
        let img: ImageBuffer<Rgb<u8>, _> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, buf)
                .expect("buffer size matches");
        img.save(path)?;
        Ok(())
    }
}

/// Memberships are summed in 2^-32 fixed point so per-pixel totals do not
/// depend on the order tiles are listed in.
const FIXED_ONE: f64 = 4294967296.0;

/// Averages the membership vectors of every tile covering a pixel and paints
/// the argmax class, lowest index on ties.
pub fn render_classmap(
    width: usize,
    height: usize,
    tiles: &[Placement],
    memberships: &Matrix,
) -> Result<ClassMap> {
    if tiles.len() != memberships.rows() {
        return Err(Error::dim(
            "render_classmap",
            memberships.rows(),
            tiles.len(),
        ));
    }
    if let Some(t) = tiles
        .iter()
        .find(|t| t.side == 0 || t.x + t.side > width || t.y + t.side > height)
    {
        return Err(Error::InvalidArgument(format!(
            "tile at ({}, {}) with side {} leaves the {width}x{height} slide",
            t.x, t.y, t.side
        )));
    }
    let c = memberships.cols();
    // Breakpoints split the slide into cells covered by a fixed set of tiles.
    let cuts = |edges: &mut dyn Iterator<Item = usize>, end: usize| {
        let mut v: Vec<usize> = edges.chain([0, end]).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let xs = cuts(&mut tiles.iter().flat_map(|t| [t.x, t.x + t.side]), width);
    let ys = cuts(&mut tiles.iter().flat_map(|t| [t.y, t.y + t.side]), height);
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    let cell = |v: &[usize], p: usize| v.binary_search(&p).expect("breakpoint");

    // 2-D difference arrays over the cell grid: coverage count and fixed-point sums.
    let stride = nx + 1;
    let mut count = vec![0i64; (nx + 1) * (ny + 1)];
    let mut sums = vec![0i64; (nx + 1) * (ny + 1) * c];
    for (i, t) in tiles.iter().enumerate() {
        let (x0, x1) = (cell(&xs, t.x), cell(&xs, t.x + t.side));
        let (y0, y1) = (cell(&ys, t.y), cell(&ys, t.y + t.side));
        for (idx, sign) in [
            (y0 * stride + x0, 1),
            (y0 * stride + x1, -1),
            (y1 * stride + x0, -1),
            (y1 * stride + x1, 1),
        ] {
            count[idx] += sign;
            for j in 0..c {
                sums[idx * c + j] += sign * (memberships.get(i, j) * FIXED_ONE).round() as i64;
            }
        }
    }
    for y in 0..=ny {
        for x in 0..=nx {
            let idx = y * stride + x;
            let left = (x > 0).then(|| idx - 1);
            let up = (y > 0).then(|| idx - stride);
            let diag = (x > 0 && y > 0).then(|| idx - stride - 1);
            for (arr, k) in [(&mut count, 1usize), (&mut sums, c)] {
                for j in 0..k {
                    let mut v = arr[idx * k + j];
                    if let Some(l) = left {
                        v += arr[l * k + j];
                    }
                    if let Some(u) = up {
                        v += arr[u * k + j];
                    }
                    if let Some(d) = diag {
                        v -= arr[d * k + j];
                    }
                    arr[idx * k + j] = v;
                }
            }
        }
    }

    let mut classes = vec![None; width * height];
    for cy in 0..ny {
        for cx in 0..nx {
            let idx = cy * stride + cx;
            if count[idx] == 0 {
                continue;
            }
            let s = &sums[idx * c..(idx + 1) * c];
            let k = (1..c).fold(0, |best, j| if s[j] > s[best] { j } else { best });
            for y in ys[cy]..ys[cy + 1] {
                classes[y * width + xs[cx]..y * width + xs[cx + 1]].fill(Some(k as u16));
            }
        }
    }
    Ok(ClassMap {
        width,
        height,
        classes,
        class_count: c,
    })
}

/// Data bounds widened by 5% of the range on each side; a zero range is
/// widened to a unit interval around the value.
pub fn axis_bounds(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() || !hi.is_finite() {
        return None;
    }
    let r = hi - lo;
    if r == 0.0 {
        return Some((lo - 0.5, hi + 0.5));
    }
    Some((lo - 0.05 * r, hi + 0.05 * r))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

/// Maps data coordinates to SVG pixels inside the plot frame.
#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Frame {
    pub fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    pub fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }

    fn axes(&self, out: &mut String, xlabel: &str, ylabel: &str) {
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let _ = writeln!(
            out,
            r##"<rect class="frame" x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
            x1 - x0,
            y1 - y0
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let (vx, vy) = (
                self.x.0 + t * (self.x.1 - self.x.0),
                self.y.0 + t * (self.y.1 - self.y.0),
            );
            let (px, py) = (self.px(vx), self.py(vy));
            let _ = writeln!(
                out,
                r##"<line x1="{px:.2}" y1="{y1}" x2="{px:.2}" y2="{}" stroke="#333"/><text x="{px:.2}" y="{}" font-size="11" text-anchor="middle">{}</text>"##,
                y1 + 5.0,
                y1 + 18.0,
                tick(vx)
            );
            let _ = writeln!(
                out,
                r##"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="#333"/><text x="{}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"##,
                x0 - 5.0,
                x0 - 8.0,
                py + 4.0,
                tick(vy)
            );
        }
        let _ = writeln!(
            out,
            r#"<text class="xlabel" x="{:.1}" y="{}" font-size="13" text-anchor="middle">{xlabel}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 10.0
        );
        let _ = writeln!(
            out,
            r#"<text class="ylabel" x="16" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">{ylabel}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0
        );
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn svg_open(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

/// Scatter of 2-D latents coloured by argmax class, with optional centroid
/// crosses.
pub fn render_scatter(
    latents: &Matrix,
    memberships: &Matrix,
    centroids: Option<&Matrix>,
    palette: &Palette,
) -> Result<String> {
    if latents.cols() != 2 {
        return Err(Error::dim("render_scatter", 2, latents.cols()));
    }
    if latents.rows() == 0 {
        return Err(Error::Empty("scatter needs at least one point"));
    }
    if memberships.rows() != latents.rows() {
        return Err(Error::dim(
            "render_scatter memberships",
            latents.rows(),
            memberships.rows(),
        ));
    }
    let bounds = |k: usize| {
        axis_bounds((0..latents.rows()).map(|i| latents.get(i, k)))
            .ok_or_else(|| Error::InvalidArgument("non-finite latent coordinate".into()))
    };
    let frame = Frame {
        x: bounds(0)?,
        y: bounds(1)?,
    };
    let mut out = String::new();
    svg_open(&mut out);
    frame.axes(&mut out, "z1", "z2");
    out.push_str("<g class=\"points\">\n");
    for i in 0..latents.rows() {
        let k = argmax(memberships.row(i));
        let _ = writeln!(
            out,
            r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{}" fill-opacity="0.8" data-class="{}"/>"#,
            frame.px(latents.get(i, 0)),
            frame.py(latents.get(i, 1)),
            hex(palette.color(k)?),
            k + 1
        );
    }
    out.push_str("</g>\n");
    if let Some(c) = centroids {
        out.push_str("<g class=\"centroids\">\n");
        for j in 0..c.rows() {
            let (x, y) = (frame.px(c.get(j, 0)), frame.py(c.get(j, 1)));
            let _ = writeln!(
                out,
                r##"<path d="M {:.3} {:.3} L {:.3} {:.3} M {:.3} {:.3} L {:.3} {:.3}" stroke="#000" stroke-width="2" data-class="{}"/>"##,
                x - 6.0,
                y - 6.0,
                x + 6.0,
                y + 6.0,
                x - 6.0,
                y + 6.0,
                x + 6.0,
                y - 6.0,
                j + 1
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn render_loss_curve(history: &[f64]) -> Result<String> {
    render_loss_curves(&[("loss".to_string(), history.to_vec())])
}

/// One polyline per labelled history, epochs numbered from one.
pub fn render_loss_curves(series: &[(String, Vec<f64>)]) -> Result<String> {
    render_lines(series, 1.0, "epoch", "loss")
}

/// Labelled series sharing an x axis that starts at `first_x` and advances
/// by one per sample.
pub fn render_lines(
    series: &[(String, Vec<f64>)],
    first_x: f64,
    xlabel: &str,
    ylabel: &str,
) -> Result<String> {
    if series.is_empty() {
        return Err(Error::Empty("line plot needs at least one series"));
    }
    for (label, h) in series {
        if h.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "series {label:?} has {} point(s); a curve needs at least 2",
                h.len()
            )));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "series {label:?} is not finite"
            )));
        }
    }
    let n = series.iter().map(|(_, h)| h.len()).max().unwrap_or(2);
    let (lo, hi) = axis_bounds(series.iter().flat_map(|(_, h)| h.iter().copied())).expect("finite");
    let frame = Frame {
        x: (first_x, first_x + (n - 1) as f64),
        y: (lo, hi),
    };
    let mut out = String::new();
    svg_open(&mut out);
    frame.axes(&mut out, xlabel, ylabel);
    let palette = Palette::default();
    for (s, (label, h)) in series.iter().enumerate() {
        let color = hex(palette.colors[s % palette.colors.len()]);
        let pts: Vec<String> = h
            .iter()
            .enumerate()
            .map(|(e, &v)| format!("{:.4},{:.4}", frame.px(first_x + e as f64), frame.py(v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" data-label="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            escape(label),
            pts.join(" ")
        );
        if series.len() > 1 {
            let y = TOP + 16.0 + 16.0 * s as f64;
            let x = WIDTH - RIGHT - 150.0;
            let _ = writeln!(
                out,
                r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="12">{}</text>"#,
                x + 20.0,
                x + 26.0,
                y + 4.0,
                escape(label)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
