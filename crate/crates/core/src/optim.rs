//! First-order update rules: Adam, RMSprop, Adagrad and Adadelta.
//!
//! Each rule updates one parameter tensor in place from its gradient and its
//! own [`ParamState`]; nothing is shared between parameter tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    RmsProp,
    Adagrad,
    Adadelta,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::Adam,
        OptimizerKind::RmsProp,
        OptimizerKind::Adagrad,
        OptimizerKind::Adadelta,
    ];
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "adagrad" => Ok(OptimizerKind::Adagrad),
            "adadelta" => Ok(OptimizerKind::Adadelta),
            other => Err(Error::Config(format!(
                "unknown optimizer `{other}` (expected adam, rmsprop, adagrad or adadelta)"
            ))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adadelta => "adadelta",
        })
    }
}

/// Algorithm choice plus hyperparameters. Fields an algorithm does not use
/// are ignored (`beta1`/`beta2` only matter to Adam, `rho` to RMSprop and
/// Adadelta).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    /// Defaults of each algorithm's original description.
    pub fn defaults(kind: OptimizerKind) -> Self {
        let base = Self {
            kind,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.9,
            eps: 1e-8,
        };
        match kind {
            OptimizerKind::Adam | OptimizerKind::RmsProp => base,
            OptimizerKind::Adagrad => Self {
                lr: 1e-2,
                eps: 1e-10,
                ..base
            },
            OptimizerKind::Adadelta => Self {
                lr: 1.0,
                eps: 1e-6,
                ..base
            },
        }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        Self { lr, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::Config(format!(
                "optimizer {what} out of range: {self:?}"
            )))
        };
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta");
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad("rho");
        }
        if !(self.eps > 0.0) {
            return bad("eps");
        }
        Ok(())
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::defaults(OptimizerKind::Adam)
    }
}

/// Per-parameter optimizer memory.
///
/// `first` holds Adam's first moment or Adadelta's running mean of squared
/// updates; `second` holds the running (or accumulated) squared gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamState<T = f32> {
    pub step: u64,
    pub first: Tensor<T>,
    pub second: Tensor<T>,
}

impl<T: Real> ParamState<T> {
    pub fn for_param(param: &Tensor<T>) -> Self {
        Self {
            step: 0,
            first: Tensor::zeros(param.shape()),
            second: Tensor::zeros(param.shape()),
        }
    }
}

fn check<T: Real>(param: &Tensor<T>, grad: &Tensor<T>, state: &ParamState<T>) -> Result<()> {
    grad.expect_shape("optimizer step", param.shape())?;
    state.first.expect_shape("optimizer state", param.shape())?;
    state
        .second
        .expect_shape("optimizer state", param.shape())?;
    Ok(())
}

pub fn adam_step<T: Real>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut ParamState<T>,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check(param, grad, state)?;
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let c1 = T::of(1.0 - cfg.beta1.powi(t));
    let c2 = T::of(1.0 - cfg.beta2.powi(t));
    let (lr, eps) = (T::of(cfg.lr), T::of(cfg.eps));
    let one = T::one();
    let iter = param.data_mut().iter_mut().zip(grad.data()).zip(
        state
            .first
            .data_mut()
            .iter_mut()
            .zip(state.second.data_mut()),
    );
    for ((p, &g), (m, v)) in iter {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

pub fn rmsprop_step<T: Real>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut ParamState<T>,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check(param, grad, state)?;
    state.step += 1;
    let (rho, lr, eps) = (T::of(cfg.rho), T::of(cfg.lr), T::of(cfg.eps));
    for ((p, &g), v) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(state.second.data_mut())
    {
        *v = rho * *v + (T::one() - rho) * g * g;
        *p = *p - lr * g / (v.sqrt() + eps);
    }
    Ok(())
}

pub fn adagrad_step<T: Real>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut ParamState<T>,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check(param, grad, state)?;
    state.step += 1;
    let (lr, eps) = (T::of(cfg.lr), T::of(cfg.eps));
    for ((p, &g), acc) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(state.second.data_mut())
    {
        *acc = *acc + g * g;
        *p = *p - lr * g / (acc.sqrt() + eps);
    }
    Ok(())
}

pub fn adadelta_step<T: Real>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut ParamState<T>,
    cfg: &OptimizerConfig,
) -> Result<()> {
    check(param, grad, state)?;
    state.step += 1;
    let (rho, lr, eps) = (T::of(cfg.rho), T::of(cfg.lr), T::of(cfg.eps));
    let one = T::one();
    let iter = param.data_mut().iter_mut().zip(grad.data()).zip(
        state
            .first
            .data_mut()
            .iter_mut()
            .zip(state.second.data_mut()),
    );
    for ((p, &g), (dx2, g2)) in iter {
        *g2 = rho * *g2 + (one - rho) * g * g;
        let delta = -((*dx2 + eps).sqrt() / (*g2 + eps).sqrt()) * g;
        *dx2 = rho * *dx2 + (one - rho) * delta * delta;
        *p = *p + lr * delta;
    }
    Ok(())
}

/// Dispatches to the rule selected by `cfg.kind`.
pub fn step<T: Real>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut ParamState<T>,
    cfg: &OptimizerConfig,
) -> Result<()> {
    match cfg.kind {
        OptimizerKind::Adam => adam_step(param, grad, state, cfg),
        OptimizerKind::RmsProp => rmsprop_step(param, grad, state, cfg),
        OptimizerKind::Adagrad => adagrad_step(param, grad, state, cfg),
        OptimizerKind::Adadelta => adadelta_step(param, grad, state, cfg),
    }
}

/// Optimizer bound to an ordered list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Optimizer<T = f32> {
    pub config: OptimizerConfig,
    states: Vec<ParamState<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new<'a>(
        config: OptimizerConfig,
        params: impl IntoIterator<Item = &'a Tensor<T>>,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            states: params.into_iter().map(ParamState::for_param).collect(),
        })
    }

    pub fn states(&self) -> &[ParamState<T>] {
        &self.states
    }

    pub fn step<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Tensor<T>>,
        grads: &[Tensor<T>],
    ) -> Result<()> {
        let params: Vec<_> = params.into_iter().collect();
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(Error::dim(
                "optimizer",
                self.states.len(),
                format!("{} params, {} grads", params.len(), grads.len()),
            ));
        }
        for ((p, g), s) in params.into_iter().zip(grads).zip(&mut self.states) {
            step(p, g, s, &self.config)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::vector(vec![v])
    }

    fn run(kind: OptimizerKind, cfg: OptimizerConfig, grads: &[f64]) -> Vec<f64> {
        let mut p = scalar(0.0);
        let mut s = ParamState::for_param(&p);
        let mut displacements = Vec::new();
        for &g in grads {
            let before = p.data()[0];
            match kind {
                OptimizerKind::Adam => adam_step(&mut p, &scalar(g), &mut s, &cfg),
                OptimizerKind::RmsProp => rmsprop_step(&mut p, &scalar(g), &mut s, &cfg),
                OptimizerKind::Adagrad => adagrad_step(&mut p, &scalar(g), &mut s, &cfg),
                OptimizerKind::Adadelta => adadelta_step(&mut p, &scalar(g), &mut s, &cfg),
            }
            .unwrap();
            displacements.push(p.data()[0] - before);
        }
        displacements
    }

    #[test]
    fn adam_first_step_is_lr() {
        let d = run(OptimizerKind::Adam, OptimizerConfig::default(), &[1.0]);
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        assert!((d[0] + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15, "{d:?}");
    }

    #[test]
    fn adam_first_step_is_odd_in_the_gradient() {
        let cfg = OptimizerConfig::default();
        for g in [0.3, 2.0, 17.0] {
            let up = run(OptimizerKind::Adam, cfg, &[g]);
            let down = run(OptimizerKind::Adam, cfg, &[-g]);
            assert_eq!(up[0], -down[0]);
        }
    }

    #[test]
    fn adagrad_accumulates() {
        let cfg = OptimizerConfig::defaults(OptimizerKind::Adagrad).with_lr(1.0);
        let d = run(OptimizerKind::Adagrad, cfg, &[3.0, 3.0]);
        assert!((d[0] + 1.0).abs() < 1e-9);
        assert!((d[1] + 3.0 / 18f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn rmsprop_first_step() {
        let cfg = OptimizerConfig::defaults(OptimizerKind::RmsProp).with_lr(0.01);
        let d = run(OptimizerKind::RmsProp, cfg, &[2.0]);
        // v = (1 - 0.9)·4 = 0.4
        assert!((d[0] + 0.01 * 2.0 / (0.4f64.sqrt() + 1e-8)).abs() < 1e-12);
    }

    #[test]
    fn adadelta_first_step() {
        let cfg = OptimizerConfig::defaults(OptimizerKind::Adadelta);
        let d = run(OptimizerKind::Adadelta, cfg, &[2.0]);
        let expect = -(1e-6f64).sqrt() / (0.4f64 + 1e-6).sqrt() * 2.0;
        assert!((d[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for kind in OptimizerKind::ALL {
            let mut p = Tensor::<f32>::from_fn(&[4], |i| i as f32 - 1.5);
            let before = p.clone();
            let mut s = ParamState::for_param(&p);
            for _ in 0..5 {
                step(
                    &mut p,
                    &Tensor::zeros(&[4]),
                    &mut s,
                    &OptimizerConfig::defaults(kind),
                )
                .unwrap();
            }
            assert_eq!(p, before, "{kind}");
            assert_eq!(s.step, 5);
        }
    }

    #[test]
    fn adam_moments_decay_under_zero_gradient() {
        let mut p = Tensor::<f32>::zeros(&[2]);
        let mut s = ParamState::for_param(&p);
        s.first = Tensor::full(&[2], 0.5);
        s.second = Tensor::full(&[2], 0.25);
        adam_step(
            &mut p,
            &Tensor::zeros(&[2]),
            &mut s,
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!((s.first.data()[0] - 0.45).abs() < 1e-7);
        assert!((s.second.data()[0] - 0.24975).abs() < 1e-7);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::<f32>::zeros(&[3]);
        let mut s = ParamState::for_param(&p);
        let err = adam_step(
            &mut p,
            &Tensor::zeros(&[2]),
            &mut s,
            &OptimizerConfig::default(),
        );
        assert!(err.is_err());
        assert_eq!(s.step, 0);
    }

    #[test]
    fn states_are_isolated() {
        let mut a = Tensor::<f32>::full(&[2], 1.0);
        let mut b = Tensor::<f32>::full(&[3], 1.0);
        let mut opt = Optimizer::new(OptimizerConfig::default(), [&a, &b]).unwrap();
        opt.step(
            [&mut a, &mut b],
            &[Tensor::full(&[2], 1.0), Tensor::zeros(&[3])],
        )
        .unwrap();
        assert!(opt.states()[1].first.data().iter().all(|&v| v == 0.0));
        assert!(opt.states()[0].first.data().iter().all(|&v| v != 0.0));
        assert_eq!(b.data(), &[1.0; 3]);
    }

    fn descend(cfg: OptimizerConfig, steps: usize) -> Vec<f64> {
        let mut w = scalar(5.0);
        let mut s = ParamState::for_param(&w);
        let mut path = vec![5.0];
        for _ in 0..steps {
            let g = scalar(2.0 * w.data()[0]);
            step(&mut w, &g, &mut s, &cfg).unwrap();
            path.push(w.data()[0]);
        }
        path
    }

    #[test]
    fn default_rates_descend_monotonically_on_a_parabola() {
        for kind in OptimizerKind::ALL {
            let path = descend(OptimizerConfig::defaults(kind), 500);
            assert!(path.windows(2).all(|p| p[1].abs() < p[0].abs()), "{kind}");
        }
    }

    #[test]
    fn parabola_minimum_is_reached() {
        let cases = [
            (
                OptimizerConfig::defaults(OptimizerKind::Adam).with_lr(0.05),
                500,
            ),
            (
                OptimizerConfig::defaults(OptimizerKind::RmsProp).with_lr(0.02),
                500,
            ),
            (
                OptimizerConfig::defaults(OptimizerKind::Adagrad).with_lr(1.0),
                500,
            ),
            (OptimizerConfig::defaults(OptimizerKind::Adadelta), 1000),
        ];
        for (cfg, steps) in cases {
            let path = descend(cfg, steps);
            assert!(
                path.last().unwrap().abs() < 0.5,
                "{:?}: {}",
                cfg.kind,
                path.last().unwrap()
            );
        }
    }

    #[test]
    fn identical_inputs_give_identical_steps() {
        for kind in OptimizerKind::ALL {
            let cfg = OptimizerConfig::defaults(kind);
            assert_eq!(descend(cfg, 50), descend(cfg, 50));
        }
    }
}
