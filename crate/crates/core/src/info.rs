//! Mutual-information and entropy estimators.
//!
//! * [`mi_xc`]: Monte-Carlo `I(X;C)` for Gaussian concept logits, with the
//!   marginal `p(c)` approximated by a mixture over an independent batch.
//! * [`entropy_c`]: `Σ_k log σ_k` averaged over the batch, i.e. the
//!   diagonal-Gaussian entropy without its constant `K/2·(1 + log 2π)`.
//! * [`mi_plane`]: kernel estimate used only for information-plane logging.
//! * [`discrete_mi`]: plug-in MI of a contingency table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diffcore::{log_sum_exp, Graph, Tensor, Var};
use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Diagonal Gaussian parameters plus reparameterized samples.
#[derive(Clone, Debug)]
pub struct GaussBatch {
    pub mu: Tensor,
    pub sigma: Tensor,
    pub samples: Tensor,
}

impl GaussBatch {
    pub fn new(mu: Tensor, sigma: Tensor, samples: Tensor) -> Result<Self> {
        if !mu.same_shape(&sigma) || !mu.same_shape(&samples) {
            return Err(Error::Dimension(format!(
                "gauss batch: mu {:?} sigma {:?} samples {:?}",
                mu.shape(),
                sigma.shape(),
                samples.shape()
            )));
        }
        check_sigma(&sigma)?;
        Ok(Self { mu, sigma, samples })
    }

    /// Samples drawn as `mu + sigma·eps`.
    pub fn sampled(mu: Tensor, sigma: Tensor, eps: &Tensor) -> Result<Self> {
        let data = mu
            .data()
            .iter()
            .zip(sigma.data())
            .zip(eps.data())
            .map(|((m, s), e)| m + s * e)
            .collect();
        let samples = Tensor::new(mu.shape().to_vec(), data)?;
        Self::new(mu, sigma, samples)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoPlanePoint {
    pub epoch: usize,
    pub i_xz: f64,
    pub i_zc: f64,
    pub i_xc: f64,
    pub i_cy: f64,
}

impl InfoPlanePoint {
    /// Estimates below −0.1 nats are beyond sampling noise.
    pub fn suspicious(&self) -> bool {
        [self.i_xz, self.i_zc, self.i_xc, self.i_cy]
            .iter()
            .any(|&v| !v.is_finite() || v < -0.1)
    }
}

fn check_sigma(sigma: &Tensor) -> Result<()> {
    match sigma.data().iter().find(|&&s| !(s > 0.0)) {
        Some(s) => Err(Error::Domain(format!("sigma must be positive, got {s}"))),
        None => Ok(()),
    }
}

/// Per-row `log N(c | mu, diag(sigma²))`.
pub fn gaussian_logpdf_diag(c: &Tensor, mu: &Tensor, sigma: &Tensor) -> Result<Vec<f64>> {
    if !c.same_shape(mu) || !c.same_shape(sigma) {
        return Err(Error::Dimension(format!(
            "logpdf: c {:?} mu {:?} sigma {:?}",
            c.shape(),
            mu.shape(),
            sigma.shape()
        )));
    }
    check_sigma(sigma)?;
    Ok((0..c.rows())
        .map(|r| row_logpdf(c.row(r), mu.row(r), sigma.row(r)))
        .collect())
}

fn row_logpdf(c: &[f64], mu: &[f64], sigma: &[f64]) -> f64 {
    c.iter()
        .zip(mu)
        .zip(sigma)
        .map(|((&c, &m), &s)| {
            let d = (c - m) / s;
            -HALF_LN_2PI - s.ln() - 0.5 * d * d
        })
        .sum()
}

/// Value and partials `(∂c, ∂mu, ∂sigma, ∂mu', ∂sigma')` of the MI estimate.
fn mi_xc_parts(
    c: &Tensor,
    mu: &Tensor,
    sigma: &Tensor,
    m_mu: &Tensor,
    m_sigma: &Tensor,
) -> Result<(f64, [Tensor; 5])> {
    if !c.same_shape(mu) || !c.same_shape(sigma) || !m_mu.same_shape(m_sigma) {
        return Err(Error::Dimension("mi_xc: batch tensors disagree in shape".into()));
    }
    if c.shape().len() != 2 || m_mu.shape().len() != 2 || c.cols() != m_mu.cols() {
        return Err(Error::Dimension(format!(
            "mi_xc: batch {:?} vs marginal {:?}",
            c.shape(),
            m_mu.shape()
        )));
    }
    let (b, k) = c.dims2();
    let m = m_mu.rows();
    if m < 2 {
        return Err(Error::config("mi_samples", format!("marginal needs at least 2 rows, got {m}")));
    }
    check_sigma(sigma)?;
    check_sigma(m_sigma)?;

    let inv_b = 1.0 / b as f64;
    let ln_m = (m as f64).ln();
    let mut dc = vec![0.0; b * k];
    let mut dmu = vec![0.0; b * k];
    let mut dsig = vec![0.0; b * k];
    let mut dmmu = vec![0.0; m * k];
    let mut dmsig = vec![0.0; m * k];
    let mut total = 0.0;
    let mut mix = vec![0.0; m];

    for i in 0..b {
        let (ci, mi, si) = (c.row(i), mu.row(i), sigma.row(i));
        let cond = row_logpdf(ci, mi, si);
        for (j, slot) in mix.iter_mut().enumerate() {
            *slot = row_logpdf(ci, m_mu.row(j), m_sigma.row(j));
        }
        let lse = log_sum_exp(&mix);
        total += cond - lse + ln_m;

        for kk in 0..k {
            let s2 = si[kk] * si[kk];
            let d = ci[kk] - mi[kk];
            dc[i * k + kk] -= inv_b * d / s2;
            dmu[i * k + kk] += inv_b * d / s2;
            dsig[i * k + kk] += inv_b * (-1.0 / si[kk] + d * d / (s2 * si[kk]));
        }
        for j in 0..m {
            let w = (mix[j] - lse).exp();
            if w == 0.0 {
                continue;
            }
            let (mj, sj) = (m_mu.row(j), m_sigma.row(j));
            for kk in 0..k {
                let s = sj[kk];
                let s2 = s * s;
                let d = ci[kk] - mj[kk];
                dc[i * k + kk] += inv_b * w * d / s2;
                dmmu[j * k + kk] -= inv_b * w * d / s2;
                dmsig[j * k + kk] -= inv_b * w * (-1.0 / s + d * d / (s2 * s));
            }
        }
    }

    let shape_b = c.shape().to_vec();
    let shape_m = m_mu.shape().to_vec();
    Ok((
        total * inv_b,
        [
            Tensor::new(shape_b.clone(), dc)?,
            Tensor::new(shape_b.clone(), dmu)?,
            Tensor::new(shape_b, dsig)?,
            Tensor::new(shape_m.clone(), dmmu)?,
            Tensor::new(shape_m, dmsig)?,
        ],
    ))
}

/// `mean_i [log p(c_i|x_i) − log (1/M Σ_j p(c_i|x'_j))]` in nats.
pub fn mi_xc(batch: &GaussBatch, marginal: &GaussBatch) -> Result<f64> {
    mi_xc_parts(
        &batch.samples,
        &batch.mu,
        &batch.sigma,
        &marginal.mu,
        &marginal.sigma,
    )
    .map(|(v, _)| v)
}

/// Differentiable [`mi_xc`]: gradients flow to the samples, both sets of
/// means and both sets of scales.
pub fn mi_xc_node(
    g: &mut Graph,
    samples: Var,
    mu: Var,
    sigma: Var,
    marginal_mu: Var,
    marginal_sigma: Var,
) -> Result<Var> {
    let (value, partials) = mi_xc_parts(
        g.value(samples),
        g.value(mu),
        g.value(sigma),
        g.value(marginal_mu),
        g.value(marginal_sigma),
    )?;
    g.scalar_fn(
        &[samples, mu, sigma, marginal_mu, marginal_sigma],
        value,
        partials.into(),
    )
}

/// Batch mean of `Σ_k log σ_k`.
pub fn entropy_c(sigma: &Tensor) -> Result<f64> {
    check_sigma(sigma)?;
    let rows = sigma.rows() as f64;
    Ok(sigma.data().iter().map(|s| s.ln()).sum::<f64>() / rows)
}

/// Differentiable [`entropy_c`].
pub fn entropy_c_node(g: &mut Graph, sigma: Var) -> Result<Var> {
    let rows = g.value(sigma).rows() as f64;
    let logs = g.log(sigma)?;
    let total = g.sum(logs);
    Ok(g.scale(total, 1.0 / rows))
}

/// Kernel bandwidth choice for [`mi_plane`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance scaled by `N^{−1/(d+4)}`, chosen per variable.
    Median,
}

const MEDIAN_SUBSAMPLE: usize = 1000;

/// Median pairwise Euclidean distance over (at most) the first 1000 rows.
pub fn median_pairwise_distance(samples: &Tensor) -> f64 {
    let n = samples.rows().min(MEDIAN_SUBSAMPLE);
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sq_dist(samples.row(i), samples.row(j)).sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    if d.len() % 2 == 0 {
        0.5 * (d[mid - 1] + d[mid])
    } else {
        d[mid]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn resolve_bandwidth(samples: &Tensor, bw: Bandwidth) -> f64 {
    match bw {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Median => {
            let n = samples.rows() as f64;
            let d = samples.cols() as f64;
            let h = median_pairwise_distance(samples) * n.powf(-1.0 / (d + 4.0));
            if h > 0.0 {
                h
            } else {
                1.0
            }
        }
    }
}

/// Kernel MI estimate between paired samples `a` and `b`.
///
/// The conditional `p(b | a_i)` is the Gaussian-kernel mixture over `b_j`
/// weighted by kernel similarity of `a_j` to `a_i`; the marginal is the
/// unweighted mixture over all `b_j`. Averages `log p(b_i|a_i) − log p(b_i)`.
pub fn mi_plane(a: &Tensor, b: &Tensor, bandwidth: Bandwidth) -> Result<f64> {
    let n = a.rows();
    if b.rows() != n {
        return Err(Error::Dimension(format!("mi_plane: {n} vs {} rows", b.rows())));
    }
    if n < 16 {
        return Err(Error::Validation(format!("mi_plane needs at least 16 rows, got {n}")));
    }
    let ha = resolve_bandwidth(a, bandwidth);
    let hb = resolve_bandwidth(b, bandwidth);
    if !(ha > 0.0 && hb > 0.0) {
        return Err(Error::Validation("mi_plane bandwidth must be positive".into()));
    }
    let (ka, kb) = (-0.5 / (ha * ha), -0.5 / (hb * hb));
    let ln_n = (n as f64).ln();
    let mut la = vec![0.0; n];
    let mut lb = vec![0.0; n];
    let mut lab = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            la[j] = ka * sq_dist(a.row(i), a.row(j));
            lb[j] = kb * sq_dist(b.row(i), b.row(j));
            lab[j] = la[j] + lb[j];
        }
        total += log_sum_exp(&lab) - log_sum_exp(&la) - log_sum_exp(&lb) + ln_n;
    }
    Ok(total / n as f64)
}

/// Plug-in mutual information (nats) of two discrete label sequences.
pub fn discrete_mi(u: &[usize], v: &[usize]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!("discrete_mi: {} vs {}", u.len(), v.len())));
    }
    if u.is_empty() {
        return Err(Error::Validation("discrete_mi needs at least one sample".into()));
    }
    let n = u.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut pu: BTreeMap<usize, usize> = BTreeMap::new();
    let mut pv: BTreeMap<usize, usize> = BTreeMap::new();
    for (&a, &b) in u.iter().zip(v) {
        *joint.entry((a, b)).or_default() += 1;
        *pu.entry(a).or_default() += 1;
        *pv.entry(b).or_default() += 1;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(a, b), &c)| {
            let pj = c as f64 / n;
            let (ma, mb) = (pu[&a] as f64 / n, pv[&b] as f64 / n);
            pj * (pj / (ma * mb)).ln()
        })
        .sum();
    Ok(mi.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::grad_check;
    use crate::rng::{standard_normal, stream};

    #[test]
    fn logpdf_reference_values() {
        let c = Tensor::from_rows(&[vec![0.3]]).unwrap();
        let lp = gaussian_logpdf_diag(&c, &c, &Tensor::from_rows(&[vec![1.0]]).unwrap()).unwrap();
        assert!((lp[0] + 0.918_939).abs() < 1e-6);

        // scaling sigma by s shifts the log-density at the mean by −K·log s
        let mu = Tensor::from_rows(&[vec![0.1, -0.4, 2.0]]).unwrap();
        let s1 = Tensor::from_rows(&[vec![0.5, 1.5, 2.0]]).unwrap();
        let s2 = s1.map(|v| 3.0 * v);
        let a = gaussian_logpdf_diag(&mu, &mu, &s1).unwrap()[0];
        let b = gaussian_logpdf_diag(&mu, &mu, &s2).unwrap()[0];
        assert!((b - (a - 3.0 * 3f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn logpdf_integrates_to_one() {
        // Simpson's rule on [−12, 12] for N(0.7, 1.3²)
        let (lo, hi, n) = (-12.0, 12.0, 4000);
        let h = (hi - lo) / n as f64;
        let mu = Tensor::from_rows(&[vec![0.7]]).unwrap();
        let sigma = Tensor::from_rows(&[vec![1.3]]).unwrap();
        let mut acc = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let c = Tensor::from_rows(&[vec![x]]).unwrap();
            let p = gaussian_logpdf_diag(&c, &mu, &sigma).unwrap()[0].exp();
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * p;
        }
        assert!((acc * h / 3.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn logpdf_rejects_non_positive_sigma() {
        let c = Tensor::from_rows(&[vec![0.0]]).unwrap();
        let s = Tensor::from_rows(&[vec![0.0]]).unwrap();
        assert!(matches!(gaussian_logpdf_diag(&c, &c, &s), Err(Error::Domain(_))));
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy_c(&Tensor::full(&[4, 3], 1.0)).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((entropy_c(&Tensor::full(&[5, 2], e)).unwrap() - 2.0).abs() < 1e-12);
        assert!(entropy_c(&Tensor::full(&[1, 1], -1.0)).is_err());
    }

    #[test]
    fn entropy_gradient_wrt_log_sigma_is_one_over_batch() {
        let mut g = Graph::new();
        let ls = g.param(Tensor::from_rows(&[vec![0.2, -0.3], vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap());
        let s = g.exp(ls);
        let h = entropy_c_node(&mut g, s).unwrap();
        let grads = g.backward(h).unwrap();
        for &v in grads.get(ls).unwrap().data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mi_xc_rejects_tiny_marginal() {
        let t = Tensor::zeros(&[4, 2]);
        let one = Tensor::full(&[4, 2], 1.0);
        let batch = GaussBatch::new(t.clone(), one.clone(), t).unwrap();
        let marg = GaussBatch::new(Tensor::zeros(&[1, 2]), Tensor::full(&[1, 2], 1.0), Tensor::zeros(&[1, 2])).unwrap();
        assert!(matches!(mi_xc(&batch, &marg), Err(Error::Config { .. })));
    }

    #[test]
    fn mi_xc_is_zero_for_identical_conditionals() {
        let mut rng = stream(3, "mi");
        let mu = Tensor::full(&[64, 3], 0.4);
        let sigma = Tensor::full(&[64, 3], 0.8);
        let eps = standard_normal(&mut rng, &[64, 3]);
        let batch = GaussBatch::sampled(mu.clone(), sigma.clone(), &eps).unwrap();
        let marg = GaussBatch::sampled(mu, sigma, &eps).unwrap();
        assert!(mi_xc(&batch, &marg).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mi_xc_gradients_match_finite_differences() {
        let mut rng = stream(11, "mi-grad");
        let params = vec![
            standard_normal(&mut rng, &[5, 3]),
            standard_normal(&mut rng, &[5, 3]).map(|v| 0.3 * v),
            standard_normal(&mut rng, &[4, 3]),
            standard_normal(&mut rng, &[4, 3]).map(|v| 0.3 * v),
        ];
        let eps = standard_normal(&mut rng, &[5, 3]);
        let err = grad_check(
            |g, p| {
                let s = g.exp(p[1]);
                let c = g.reparam_sample(p[0], p[1], &eps)?;
                let ms = g.exp(p[3]);
                mi_xc_node(g, c, p[0], s, p[2], ms)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn mi_xc_is_permutation_invariant_in_marginal() {
        let mut rng = stream(5, "perm");
        let mu = standard_normal(&mut rng, &[16, 2]);
        let sigma = Tensor::full(&[16, 2], 0.7);
        let eps = standard_normal(&mut rng, &[16, 2]);
        let batch = GaussBatch::sampled(mu.clone(), sigma.clone(), &eps).unwrap();
        let order: Vec<usize> = (0..16).rev().collect();
        let m1 = GaussBatch::sampled(mu.clone(), sigma.clone(), &eps).unwrap();
        let m2 = GaussBatch::sampled(mu.select_rows(&order), sigma.select_rows(&order), &eps.select_rows(&order)).unwrap();
        let (a, b) = (mi_xc(&batch, &m1).unwrap(), mi_xc(&batch, &m2).unwrap());
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn discrete_mi_reference_values() {
        let u = [0, 1, 0, 1, 1, 0];
        assert!((discrete_mi(&u, &u).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

        // joint table [[0.4,0.1],[0.1,0.4]] realised with 10 samples
        let u = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let v = [0, 0, 0, 0, 1, 1, 1, 1, 1, 0];
        let direct = 2.0 * 0.4 * (0.4f64 / 0.25).ln() + 2.0 * 0.1 * (0.1f64 / 0.25).ln();
        assert!((direct - 0.192_745).abs() < 1e-6);
        assert!((discrete_mi(&u, &v).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn mi_plane_limits() {
        let mut rng = stream(9, "plane");
        let a = standard_normal(&mut rng, &[200, 1]);
        let constant = Tensor::full(&[200, 1], 3.0);
        assert!(mi_plane(&a, &constant, Bandwidth::Median).unwrap().abs() < 1e-12);

        let wide = mi_plane(&a, &a, Bandwidth::Fixed(0.5)).unwrap();
        let narrow = mi_plane(&a, &a, Bandwidth::Fixed(0.05)).unwrap();
        assert!(wide > 0.3 && narrow > wide);
        assert!(mi_plane(&Tensor::zeros(&[8, 1]), &Tensor::zeros(&[8, 1]), Bandwidth::Median).is_err());
    }
}
