//! Downlink transmit processing: matched filter, ZF/MMSE channel inversion,
//! Tomlinson-Harashima precoding, vector perturbation and regularized block
//! diagonalization.
//!
//! All precoders take the stacked downlink channel `H` (`K N_U x N_A`) and
//! produce an `N_A x 1` transmit vector scaled by `beta` so that its energy
//! equals the power budget exactly (instantaneous normalization). Receivers
//! are assumed to know `beta`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;

use crate::modem;
use crate::numerics::{lq_decompose, svd, vec_norm_sqr, Cholesky, Complex, ComplexMatrix, LinalgError};
use crate::Error;

/// Default cap on the number of candidates enumerated by vector perturbation.
pub const VP_DEFAULT_CAP: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerBudget {
    p_total: f64,
}

impl PowerBudget {
    pub fn new(p_total: f64) -> Result<Self, Error> {
        if !(p_total.is_finite() && p_total > 0.0) {
            return Err(Error::Invalid { field: "p_total", constraint: format!("must be finite and > 0, got {p_total}") });
        }
        Ok(Self { p_total })
    }

    pub fn p_total(&self) -> f64 {
        self.p_total
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrecoderOutput {
    /// `N_A x 1` transmit vector, already scaled by `beta`.
    pub x: ComplexMatrix,
    pub beta: f64,
    /// Perturbation vector `p` chosen by vector perturbation.
    pub perturbation: Option<Vec<Complex>>,
}

/// Scales `x` to the budget: `beta = sqrt(P / ||x||^2)`. A zero vector is
/// returned unchanged with `beta = 1`.
pub fn normalize_power(mut x: ComplexMatrix, budget: PowerBudget) -> (ComplexMatrix, f64) {
    let energy = x.norm_sqr();
    if energy == 0.0 {
        return (x, 1.0);
    }
    let beta = (budget.p_total / energy).sqrt();
    x.scale_mut(beta);
    (x, beta)
}

fn check_symbols(h: &ComplexMatrix, s: &[Complex]) -> Result<(), Error> {
    if h.rows() != s.len() {
        return Err(Error::LengthMismatch { left: h.rows(), right: s.len() });
    }
    Ok(())
}

/// Transmit matched filter, `x = beta H^H s`.
pub fn tmf_precode(h: &ComplexMatrix, s: &[Complex], budget: PowerBudget) -> Result<PrecoderOutput, Error> {
    check_symbols(h, s)?;
    let xu = h.hermitian_matmul(&ComplexMatrix::column_vector(s))?;
    let (x, beta) = normalize_power(xu, budget);
    Ok(PrecoderOutput { x, beta, perturbation: None })
}

/// `W = H^H (H H^H)^{-1}`.
pub fn zf_precoder_matrix(h: &ComplexMatrix) -> Result<ComplexMatrix, Error> {
    mmse_precoder_matrix(h, 0.0)
}

/// `W = H^H (H H^H + gamma I)^{-1}`, built from a Cholesky solve against
/// the identity.
pub fn mmse_precoder_matrix(h: &ComplexMatrix, gamma: f64) -> Result<ComplexMatrix, Error> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Invalid { field: "mmse_gamma", constraint: format!("must be finite and >= 0, got {gamma}") });
    }
    let mut gram = h.gram_rows();
    gram.add_diagonal(gamma);
    let inv = Cholesky::new(&gram)?.inverse();
    Ok(h.hermitian_matmul(&inv)?)
}

/// Regularized channel-inversion loading `K N_U sigma_n^2 / P`.
pub fn default_mmse_gamma(streams: usize, sigma_n2: f64, p_total: f64) -> f64 {
    streams as f64 * sigma_n2 / p_total
}

/// `x = beta W s`. Because the product is linear, `W s` is the sum over
/// users of `W_k s_k`.
pub fn linear_precode(w: &ComplexMatrix, s: &[Complex], budget: PowerBudget) -> Result<PrecoderOutput, Error> {
    if w.cols() != s.len() {
        return Err(Error::LengthMismatch { left: w.cols(), right: s.len() });
    }
    let xu = w.matmul(&ComplexMatrix::column_vector(s))?;
    let (x, beta) = normalize_power(xu, budget);
    Ok(PrecoderOutput { x, beta, perturbation: None })
}

/// Tomlinson-Harashima precoder built from `H = L Q`.
///
/// Feedforward `F = Q^H`, feedback `B = diag(L)^{-1} L` (unit diagonal),
/// natural stream order. Stream `l` of the receiver scales its sample by
/// `1 / (beta L_ll)` and applies the same modulo.
#[derive(Clone, Debug)]
pub struct ThpPrecoder {
    feedforward: ComplexMatrix,
    feedback: ComplexMatrix,
    gains: Vec<f64>,
    tau: f64,
}

impl ThpPrecoder {
    pub fn new(h: &ComplexMatrix, tau: f64) -> Result<Self, Error> {
        let lq = lq_decompose(h)?;
        let m = h.rows();
        let gains: Vec<f64> = (0..m).map(|i| lq.l[(i, i)].re).collect();
        let feedback = ComplexMatrix::from_fn(m, m, |i, j| if j <= i { lq.l[(i, j)] / gains[i] } else { Complex::new(0.0, 0.0) });
        Ok(Self { feedforward: lq.q.hermitian(), feedback, gains, tau })
    }

    pub fn feedforward(&self) -> &ComplexMatrix {
        &self.feedforward
    }

    pub fn feedback(&self) -> &ComplexMatrix {
        &self.feedback
    }

    /// Diagonal of `L`, the per-stream gains the receivers compensate.
    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// Successive modulo pre-cancellation:
    /// `x~_l = mod(s_l - sum_{q<l} B_lq x~_q)`.
    pub fn shape_symbols(&self, s: &[Complex]) -> Vec<Complex> {
        let mut xt: Vec<Complex> = Vec::with_capacity(s.len());
        for (l, &sl) in s.iter().enumerate() {
            let row = self.feedback.row(l);
            let interference: Complex = row[..l].iter().zip(&xt).map(|(b, x)| b * x).sum();
            xt.push(modem::modulo(sl - interference, self.tau));
        }
        xt
    }

    pub fn precode(&self, s: &[Complex], budget: PowerBudget) -> Result<PrecoderOutput, Error> {
        if s.len() != self.gains.len() {
            return Err(Error::LengthMismatch { left: self.gains.len(), right: s.len() });
        }
        let xt = self.shape_symbols(s);
        let xu = self.feedforward.matmul(&ComplexMatrix::column_vector(&xt))?;
        let (x, beta) = normalize_power(xu, budget);
        Ok(PrecoderOutput { x, beta, perturbation: None })
    }

    /// Per-stream receiver: undo gain and `beta`, then the modulo.
    pub fn receive(&self, y: &[Complex], beta: f64) -> Vec<Complex> {
        y.iter()
            .zip(&self.gains)
            .map(|(&v, &g)| modem::modulo(v / (beta * g), self.tau))
            .collect()
    }
}

pub fn thp_precode(h: &ComplexMatrix, s: &[Complex], budget: PowerBudget) -> Result<PrecoderOutput, Error> {
    check_symbols(h, s)?;
    ThpPrecoder::new(h, modem::QPSK_TAU)?.precode(s, budget)
}

/// Exhaustive perturbation search over `p in {-r..r}^(2M)` (real and
/// imaginary parts independently), minimizing `||W (s + tau p)||^2`.
///
/// Returns `(p, objective)`. `p = 0` is evaluated first and only strictly
/// better candidates replace it.
pub fn vp_search(
    gram: &ComplexMatrix,
    s: &[Complex],
    tau: f64,
    radius: u32,
    cap: u64,
) -> Result<(Vec<Complex>, f64), Error> {
    let m = s.len();
    if gram.shape() != (m, m) {
        return Err(Error::LengthMismatch { left: gram.rows(), right: m });
    }
    let candidates = vp_candidates(m, radius);
    if candidates > cap as f64 {
        return Err(Error::SearchSpaceTooLarge {
            candidates,
            cap,
            hint: "reduce vp_radius or the number of streams",
        });
    }
    let objective = |u: &[Complex]| -> f64 {
        let mut acc = 0.0;
        for i in 0..m {
            let gi = gram.row(i);
            let t: Complex = gi.iter().zip(u).map(|(g, x)| g * x).sum();
            acc += (u[i].conj() * t).re;
        }
        acc
    };
    let mut best_p = vec![Complex::new(0.0, 0.0); m];
    let mut best = objective(s);
    if radius == 0 {
        return Ok((best_p, best));
    }
    let r = radius as i64;
    let mut digits = vec![-r; 2 * m];
    let mut u = vec![Complex::new(0.0, 0.0); m];
    loop {
        if digits.iter().any(|&d| d != 0) {
            for i in 0..m {
                u[i] = s[i] + Complex::new(digits[2 * i] as f64, digits[2 * i + 1] as f64) * tau;
            }
            let f = objective(&u);
            if f < best {
                best = f;
                for i in 0..m {
                    best_p[i] = Complex::new(digits[2 * i] as f64, digits[2 * i + 1] as f64);
                }
            }
        }
        // odometer, last digit fastest
        let mut pos = 2 * m;
        loop {
            if pos == 0 {
                return Ok((best_p, best));
            }
            pos -= 1;
            if digits[pos] < r {
                digits[pos] += 1;
                break;
            }
            digits[pos] = -r;
        }
    }
}

/// `(2 r + 1)^(2 M)` as a float, so it cannot overflow.
pub fn vp_candidates(streams: usize, radius: u32) -> f64 {
    (2.0 * radius as f64 + 1.0).powi(2 * streams as i32)
}

/// Vector perturbation on top of a linear precoder `W`:
/// `x = beta W (s + tau p)`.
pub fn vp_precode(
    w: &ComplexMatrix,
    s: &[Complex],
    tau: f64,
    radius: u32,
    budget: PowerBudget,
) -> Result<PrecoderOutput, Error> {
    vp_precode_with_cap(w, s, tau, radius, VP_DEFAULT_CAP, budget)
}

pub fn vp_precode_with_cap(
    w: &ComplexMatrix,
    s: &[Complex],
    tau: f64,
    radius: u32,
    cap: u64,
    budget: PowerBudget,
) -> Result<PrecoderOutput, Error> {
    if w.cols() != s.len() {
        return Err(Error::LengthMismatch { left: w.cols(), right: s.len() });
    }
    let gram = w.hermitian_matmul(w)?;
    let (p, _) = vp_search(&gram, s, tau, radius, cap)?;
    let u: Vec<Complex> = s.iter().zip(&p).map(|(a, b)| a + b * tau).collect();
    let xu = w.matmul(&ComplexMatrix::column_vector(&u))?;
    let (x, beta) = normalize_power(xu, budget);
    Ok(PrecoderOutput { x, beta, perturbation: Some(p) })
}

/// Regularized block diagonalization for per-user blocks `H_k` (`N_U x N_A`).
///
/// Stage one whitens user `k` against the other users' stacked channel
/// `Hb_k = U S V^H`: `Ma_k = V (S^T S / alpha + I)^{-1/2}` over the full
/// right-singular basis. With `alpha = 0` this is the projector onto the
/// null space of `Hb_k`; as `alpha` grows it tends to the identity. Stage two
/// takes the `N_U` dominant right-singular vectors `V_k` of `H_k Ma_k` with
/// equal power, and `W_k = Ma_k V_k`.
///
/// `W_k` does not depend on which square root of `Ma_k Ma_k^H` is used, and
/// `Ma_k Ma_k^H = I - Hb_k^H (Hb_k Hb_k^H + alpha I)^{-1} Hb_k`, so the
/// construction works entirely from the `K N_U x K N_U` Gram matrix and an
/// `N_U x N_U` SVD per user.
pub fn rbd_precoder_matrix(per_user: &[ComplexMatrix], alpha: f64) -> Result<ComplexMatrix, Error> {
    let k = per_user.len();
    if k < 2 {
        return Err(Error::Invalid { field: "k", constraint: "RBD needs at least two users".into() });
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Invalid { field: "rbd_alpha", constraint: format!("must be finite and >= 0, got {alpha}") });
    }
    let h = crate::channel::stack_composite(per_user, crate::channel::Link::Downlink)?;
    let (n_u, n_a) = per_user[0].shape();
    let m = h.rows();
    let gram = h.gram_rows();
    let mut w = ComplexMatrix::zeros(n_a, m);
    for user in 0..k {
        let own: Vec<usize> = (user * n_u..(user + 1) * n_u).collect();
        let others: Vec<usize> = (0..m).filter(|i| !own.contains(i)).collect();
        let mut g_oo = gram.select(&others, &others);
        g_oo.add_diagonal(alpha);
        let g_ok = gram.select(&others, &own);
        let x = Cholesky::new(&g_oo)?.solve(&g_ok)?;
        // T = Ma Ma^H H_k^H = H_k^H - Hb^H X
        let h_bar = h.select(&others, &(0..n_a).collect::<Vec<_>>());
        let t = per_user[user].hermitian().sub(&h_bar.hermitian_matmul(&x)?)?;
        // E = H_k T = (H_k Ma)(H_k Ma)^H
        let e = gram.select(&own, &own).sub(&gram.select(&own, &others).matmul(&x)?)?;
        let e = ComplexMatrix::from_fn(n_u, n_u, |i, j| (e[(i, j)] + e[(j, i)].conj()) * 0.5);
        let f = svd(&e)?;
        let tol = 1e-12 * f.singular_values[0].max(f64::MIN_POSITIVE);
        let mut scale = Vec::with_capacity(n_u);
        for (i, &lambda) in f.singular_values.iter().enumerate() {
            if !(lambda > tol) {
                return Err(LinalgError::RankDeficient { row: user * n_u + i, value: lambda }.into());
            }
            scale.push(1.0 / lambda.sqrt());
        }
        // W_k = T U diag(lambda^{-1/2})
        let tu = t.matmul(&f.u)?;
        let wk = ComplexMatrix::from_fn(n_a, n_u, |i, j| tu[(i, j)] * scale[j]);
        w.set_block(0, user * n_u, &wk);
    }
    Ok(w)
}

/// Energy of a transmit vector, for budget checks.
pub fn transmit_energy(out: &PrecoderOutput) -> f64 {
    vec_norm_sqr(out.x.as_slice())
}
