//! Training objectives: the plain CBM loss and the two concept-level
//! information bottleneck surrogates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::info::{entropy_c_node, mi_xc_node};
use crate::model::ForwardVars;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossVariant {
    Vanilla,
    /// Entropy surrogate: `CE + (1−β)·BCE − w_H·Ĥ(C)`.
    IbB,
    /// Estimator surrogate: `CE + BCE + β·Î(X;C)`.
    IbE,
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossVariant::Vanilla => "vanilla",
            LossVariant::IbB => "ib_b",
            LossVariant::IbE => "ib_e",
        })
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "vanilla" => Ok(LossVariant::Vanilla),
            "ib_b" => Ok(LossVariant::IbB),
            "ib_e" => Ok(LossVariant::IbE),
            other => Err(Error::config("loss", format!("`{other}` is not vanilla, ib_b or ib_e"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub variant: LossVariant,
    pub beta: f64,
    pub lambda_concept: f64,
    /// Entropy weight for `IbB`; `None` means `1 − β`.
    pub w_h: Option<f64>,
    pub mi_samples: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::Vanilla,
            beta: 0.5,
            lambda_concept: 1.0,
            w_h: None,
            mi_samples: 64,
        }
    }
}

impl LossConfig {
    pub fn new(variant: LossVariant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn entropy_weight(&self) -> f64 {
        self.w_h.unwrap_or(1.0 - self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if !(self.lambda_concept > 0.0) || !self.lambda_concept.is_finite() {
            return Err(Error::config("lambda_concept", format!("{} must be > 0", self.lambda_concept)));
        }
        if let Some(w) = self.w_h {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::config("w_h", format!("{w} must be >= 0")));
            }
        }
        check_mi_samples(self.mi_samples)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::config("beta", format!("{beta} is outside [0, 1)")));
    }
    Ok(())
}

fn check_mi_samples(m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::config("mi_samples", format!("{m} < 2")));
    }
    Ok(())
}

/// Supervision for one batch. `y` is `None` during a concept-only phase.
#[derive(Clone, Copy, Debug)]
pub struct Targets<'a> {
    pub c: &'a Tensor,
    pub y: Option<&'a [usize]>,
}

/// `(mu, sigma)` of the marginal batch used by [`loss_ib_e`].
#[derive(Clone, Copy, Debug)]
pub struct Marginal {
    pub mu: Var,
    pub sigma: Var,
}

fn with_label_ce(g: &mut Graph, out: &ForwardVars, t: Targets<'_>, rest: Var) -> Result<Var> {
    match t.y {
        Some(y) => {
            let ce = g.softmax_cross_entropy(out.y_logits, y)?;
            g.add(ce, rest)
        }
        None => Ok(rest),
    }
}

pub fn loss_vanilla(g: &mut Graph, out: &ForwardVars, t: Targets<'_>, lambda_concept: f64) -> Result<Var> {
    let bce = g.bce_with_logits(out.bce_logits, t.c)?;
    let concept = g.scale(bce, lambda_concept);
    with_label_ce(g, out, t, concept)
}

/// The entropy reads `sigma_detached`, so its gradient stops at the
/// sigma head and never reaches the encoder.
pub fn loss_ib_b(g: &mut Graph, out: &ForwardVars, t: Targets<'_>, beta: f64, w_h: f64) -> Result<Var> {
    check_beta(beta)?;
    let bce = g.bce_with_logits(out.bce_logits, t.c)?;
    let concept = g.scale(bce, 1.0 - beta);
    let h = entropy_c_node(g, out.sigma_detached)?;
    let h = g.scale(h, w_h);
    let rest = g.sub(concept, h)?;
    with_label_ce(g, out, t, rest)
}

pub fn loss_ib_e(g: &mut Graph, out: &ForwardVars, t: Targets<'_>, beta: f64, marginal: Marginal) -> Result<Var> {
    check_beta(beta)?;
    check_mi_samples(g.value(marginal.mu).rows())?;
    let bce = g.bce_with_logits(out.bce_logits, t.c)?;
    let concept = g.scale(bce, 1.0);
    let mi = mi_xc_node(g, out.c_logits, out.mu, out.sigma, marginal.mu, marginal.sigma)?;
    let mi = g.scale(mi, beta);
    let rest = g.add(concept, mi)?;
    with_label_ce(g, out, t, rest)
}

/// Dispatches on `cfg.variant`. `marginal` is required for `IbE`.
pub fn loss(g: &mut Graph, out: &ForwardVars, t: Targets<'_>, cfg: &LossConfig, marginal: Option<Marginal>) -> Result<Var> {
    match cfg.variant {
        LossVariant::Vanilla => loss_vanilla(g, out, t, cfg.lambda_concept),
        LossVariant::IbB => loss_ib_b(g, out, t, cfg.beta, cfg.entropy_weight()),
        LossVariant::IbE => {
            let m = marginal.ok_or_else(|| Error::Contract("ib_e needs a marginal batch".into()))?;
            loss_ib_e(g, out, t, cfg.beta, m)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::relative_error;
    use crate::model::{Bound, CbmModel, ConceptMode, ModelConfig, ParamSet};
    use crate::rng::{standard_normal, stream};
    use rand::Rng as _;

    struct Fixture {
        model: CbmModel,
        x: Tensor,
        eps: Tensor,
        xm: Tensor,
        c: Tensor,
        y: Vec<usize>,
    }

    fn fixture(seed: u64) -> Fixture {
        let cfg = ModelConfig {
            d_in: 5,
            hidden: vec![7],
            n_concepts: 3,
            n_classes: 4,
            mode: ConceptMode::Soft,
        };
        let model = CbmModel::init(cfg, seed).unwrap();
        let mut rng = stream(seed, "loss-fixture");
        let x = standard_normal(&mut rng, &[6, 5]);
        let eps = standard_normal(&mut rng, &[6, 3]);
        let xm = standard_normal(&mut rng, &[4, 5]);
        let c = Tensor::matrix(6, 3, (0..18).map(|_| rng.random_range(0..2) as f64).collect()).unwrap();
        let y = (0..6).map(|_| rng.random_range(0..4)).collect();
        Fixture { model, x, eps, xm, c, y }
    }

    fn build(f: &Fixture, g: &mut Graph, p: &Bound) -> (ForwardVars, Marginal) {
        let xv = g.constant(f.x.clone());
        let out = f.model.forward_graph(g, p, xv, &f.eps).unwrap();
        let xm = g.constant(f.xm.clone());
        let m = f
            .model
            .forward_graph(g, p, xm, &Tensor::zeros(&[4, 3]))
            .unwrap();
        (out, Marginal { mu: m.mu, sigma: m.sigma })
    }

    fn value_of(f: &Fixture, which: impl Fn(&mut Graph, &ForwardVars, Targets<'_>, Marginal) -> Var) -> f64 {
        let mut g = Graph::new();
        let p = f.model.bind(&mut g, ParamSet::All);
        let (out, m) = build(f, &mut g, &p);
        let t = Targets { c: &f.c, y: Some(&f.y) };
        let l = which(&mut g, &out, t, m);
        g.value(l).item()
    }

    #[test]
    fn degenerate_settings_equal_vanilla() {
        for seed in 0..10 {
            let f = fixture(seed);
            let v = value_of(&f, |g, o, t, _| loss_vanilla(g, o, t, 1.0).unwrap());
            let b = value_of(&f, |g, o, t, _| loss_ib_b(g, o, t, 0.0, 0.0).unwrap());
            let e = value_of(&f, |g, o, t, m| loss_ib_e(g, o, t, 0.0, m).unwrap());
            assert!((v - b).abs() < 1e-12 && (v - e).abs() < 1e-12, "{v} {b} {e}");
        }
    }

    #[test]
    fn zero_concept_weight_is_label_ce() {
        let f = fixture(1);
        let v = value_of(&f, |g, o, t, _| loss_vanilla(g, o, t, 0.0).unwrap());
        let ce = value_of(&f, |g, o, t, _| g.softmax_cross_entropy(o.y_logits, t.y.unwrap()).unwrap());
        assert_eq!(v, ce);
    }

    #[test]
    fn beta_out_of_range_is_config_error() {
        let f = fixture(0);
        let mut g = Graph::new();
        let p = f.model.bind(&mut g, ParamSet::All);
        let (out, m) = build(&f, &mut g, &p);
        let t = Targets { c: &f.c, y: Some(&f.y) };
        assert!(matches!(loss_ib_b(&mut g, &out, t, 1.0, 0.5), Err(Error::Config { .. })));
        assert!(matches!(loss_ib_e(&mut g, &out, t, 1.5, m), Err(Error::Config { .. })));
        let cfg = LossConfig {
            mi_samples: 1,
            ..LossConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ib_e_is_monotone_in_beta_when_mi_is_positive() {
        let f = fixture(4);
        let mi = value_of(&f, |g, o, _, m| mi_xc_node(g, o.c_logits, o.mu, o.sigma, m.mu, m.sigma).unwrap());
        let mut prev = f64::NEG_INFINITY;
        for beta in [0.0, 0.1, 0.25, 0.5, 0.75, 0.9] {
            let v = value_of(&f, |g, o, t, m| loss_ib_e(g, o, t, beta, m).unwrap());
            if mi >= 0.0 {
                assert!(v >= prev);
            } else {
                assert!(v <= prev || prev == f64::NEG_INFINITY);
            }
            prev = v;
        }
    }

    fn encoder_grads(f: &Fixture, which: impl Fn(&mut Graph, &ForwardVars, Targets<'_>) -> Var) -> Vec<Tensor> {
        let mut g = Graph::new();
        let p = f.model.bind(&mut g, ParamSet::All);
        let xv = g.constant(f.x.clone());
        let out = f.model.forward_graph(&mut g, &p, xv, &f.eps).unwrap();
        let t = Targets { c: &f.c, y: Some(&f.y) };
        let l = which(&mut g, &out, t);
        let grads = g.backward(l).unwrap();
        p.encoder_vars()
            .into_iter()
            .map(|v| grads.wrt(v, g.value(v)))
            .collect()
    }

    #[test]
    fn entropy_term_never_reaches_the_encoder() {
        let f = fixture(2);
        let only_h = encoder_grads(&f, |g, o, _| entropy_c_node(g, o.sigma_detached).unwrap());
        assert!(only_h.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));

        let full = encoder_grads(&f, |g, o, t| loss_ib_b(g, o, t, 0.3, 0.8).unwrap());
        let without = encoder_grads(&f, |g, o, t| {
            let ce = g.softmax_cross_entropy(o.y_logits, t.y.unwrap()).unwrap();
            let bce = g.bce_with_logits(o.bce_logits, t.c).unwrap();
            let bce = g.scale(bce, 0.7);
            g.add(ce, bce).unwrap()
        });
        for (a, b) in full.iter().zip(&without) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn concept_only_phase_drops_label_term() {
        let f = fixture(3);
        let with = value_of(&f, |g, o, t, _| loss_vanilla(g, o, t, 1.0).unwrap());
        let without = value_of(&f, |g, o, t, _| loss_vanilla(g, o, Targets { y: None, ..t }, 1.0).unwrap());
        let ce = value_of(&f, |g, o, t, _| g.softmax_cross_entropy(o.y_logits, t.y.unwrap()).unwrap());
        assert!((with - without - ce).abs() < 1e-12);
    }

    /// For `IbB` the encoder sees no entropy gradient, so its coordinates
    /// are compared against the same loss with `w_H = 0`.
    fn max_fd_error(f: &Fixture, variant: LossVariant) -> f64 {
        let cfg = LossConfig {
            variant,
            beta: 0.4,
            ..LossConfig::default()
        };
        let params: Vec<Tensor> = f.model.params().into_iter().cloned().collect();
        let eval = |params: &[Tensor], cfg: &LossConfig| -> (f64, Vec<Tensor>) {
            let mut m = f.model.clone();
            for (dst, src) in m.params_mut().into_iter().zip(params) {
                *dst = src.clone();
            }
            let fx = Fixture { model: m, ..clone_fixture(f) };
            let mut g = Graph::new();
            let p = fx.model.bind(&mut g, ParamSet::All);
            let (out, marg) = build(&fx, &mut g, &p);
            let t = Targets { c: &fx.c, y: Some(&fx.y) };
            let l = loss(&mut g, &out, t, cfg, Some(marg)).unwrap();
            let grads = g.backward(l).unwrap();
            let gs = p.vars().into_iter().map(|v| grads.wrt(v, g.value(v))).collect();
            (g.value(l).item(), gs)
        };
        let (_, analytic) = eval(&params, &cfg);
        let n_encoder = 2 * f.model.encoder.len();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (i, p) in params.iter().enumerate() {
            let numeric_cfg = if variant == LossVariant::IbB && i < n_encoder {
                LossConfig { w_h: Some(0.0), ..cfg }
            } else {
                cfg
            };
            for j in 0..p.len() {
                let mut plus = params.clone();
                plus[i].data_mut()[j] += h;
                let mut minus = params.clone();
                minus[i].data_mut()[j] -= h;
                let num = (eval(&plus, &numeric_cfg).0 - eval(&minus, &numeric_cfg).0) / (2.0 * h);
                worst = worst.max(relative_error(analytic[i].data()[j], num));
            }
        }
        worst
    }

    fn clone_fixture(f: &Fixture) -> Fixture {
        Fixture {
            model: f.model.clone(),
            x: f.x.clone(),
            eps: f.eps.clone(),
            xm: f.xm.clone(),
            c: f.c.clone(),
            y: f.y.clone(),
        }
    }

    #[test]
    fn all_losses_match_finite_differences() {
        for variant in [LossVariant::Vanilla, LossVariant::IbB, LossVariant::IbE] {
            let err = max_fd_error(&fixture(9), variant);
            assert!(err < 1e-4, "{variant}: {err}");
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [LossVariant::Vanilla, LossVariant::IbB, LossVariant::IbE] {
            assert_eq!(v.to_string().parse::<LossVariant>().unwrap(), v);
        }
        assert!("ib".parse::<LossVariant>().is_err());
    }
}
