//! Array baselines for the sum-rate comparison: fully digital zero-forcing
//! and a hybrid transmitter with one RF chain behind a phase-shifter network.
//!
//! User `k` on bin `n` receives `y = g_{k,n}^H x` where `g_{k,n}` is the
//! `M`-vector stored as row `k` of `MimoChannel::per_bin[n]`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::alloc::waterfill;
use crate::error::{Error, Result};
use crate::linalg::eigh;
use crate::scene::MimoChannel;

/// Ridge, relative to the mean diagonal of the Gram matrix, applied to
/// rank-deficient bins.
pub const ZF_RIDGE: f64 = 1e-12;

fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// `user`-th channel vector of one bin, `g_{k,n}`.
fn user_vector(h: &DMatrix<Complex64>, user: usize) -> DVector<Complex64> {
    h.row(user).transpose()
}

/// Precoders of one bin: unit-norm ZF directions for the served users.
#[derive(Debug, Clone, PartialEq)]
pub struct BinPrecoder {
    pub users: Vec<usize>,
    /// `M x |users|`, unit-norm columns.
    pub vectors: DMatrix<Complex64>,
    pub powers: Vec<f64>,
    /// Effective gains `|g_k^H w_k|^2` (before dividing by the noise).
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZfOutcome {
    /// Bits/s/Hz averaged over bins.
    pub sum_rate: f64,
    pub per_bin_rate: Vec<f64>,
    pub precoders: Vec<BinPrecoder>,
    /// Bins whose Gram matrix was singular to working precision and needed
    /// the ridge.
    pub rank_deficient_bins: Vec<usize>,
    /// `max |g_j^H w_k|^2 / ||g_j||^2` over served `j != k`.
    pub max_residual_interference: f64,
}

impl ZfOutcome {
    pub fn flagged(&self) -> bool {
        !self.rank_deficient_bins.is_empty()
    }

    pub fn mean_served(&self) -> f64 {
        self.precoders.iter().map(|p| p.users.len()).sum::<usize>() as f64 / self.precoders.len() as f64
    }
}

struct ZfBin {
    vectors: DMatrix<Complex64>,
    gains: Vec<f64>,
    rank_deficient: bool,
    residual: f64,
}

/// Normalized ZF precoders for `users` on one bin.
fn zf_bin(h: &DMatrix<Complex64>, users: &[usize]) -> ZfBin {
    let m = h.ncols();
    let s = users.len();
    let g = DMatrix::from_fn(m, s, |r, c| h[(users[c], r)]);
    let gram = g.adjoint() * &g;
    let mean_diag = (0..s).map(|i| gram[(i, i)].re).sum::<f64>() / s as f64;

    let full_rank = s <= m
        && eigh(&gram)
            .map(|e| e.values[s - 1] > ZF_RIDGE * e.values[0])
            .unwrap_or(false);
    let (inverse, rank_deficient) = match full_rank.then(|| Cholesky::new(gram.clone())).flatten() {
        Some(chol) => (chol.inverse(), false),
        None => {
            let ridged = &gram + DMatrix::identity(s, s) * Complex64::new(ZF_RIDGE * mean_diag, 0.0);
            let inv = Cholesky::new(ridged)
                .map(|c| c.inverse())
                .unwrap_or_else(|| DMatrix::zeros(s, s));
            (inv, true)
        }
    };

    // W = G (G^H G)^-1, so that G^H W = I
    let mut w = &g * inverse;
    let mut gains = Vec::with_capacity(s);
    for c in 0..s {
        let norm = w.column(c).norm();
        if norm > 0.0 {
            w.column_mut(c).unscale_mut(norm);
        }
        gains.push(g.column(c).dotc(&w.column(c)).norm_sqr());
    }
    let mut residual: f64 = 0.0;
    for j in 0..s {
        let gj = g.column(j);
        let norm_j = gj.norm_squared();
        for k in 0..s {
            if j != k && norm_j > 0.0 {
                residual = residual.max(gj.dotc(&w.column(k)).norm_sqr() / norm_j);
            }
        }
    }
    ZfBin {
        vectors: w,
        gains,
        rank_deficient,
        residual,
    }
}

/// ZF gains `1 / [(G^H G)^-1]_ii` of a well-conditioned user group.
fn zf_gains(h: &DMatrix<Complex64>, users: &[usize]) -> Vec<f64> {
    let s = users.len();
    let gram = DMatrix::from_fn(s, s, |i, j| {
        (0..h.ncols()).map(|m| h[(users[i], m)].conj() * h[(users[j], m)]).sum::<Complex64>()
    });
    match Cholesky::new(gram) {
        Some(chol) => {
            let inv = chol.inverse();
            (0..s).map(|i| inv[(i, i)].re.recip()).collect()
        }
        None => zf_bin(h, users).gains,
    }
}

/// Water-filling that tolerates all-zero gains (rate zero).
fn fill(gains: &[f64], budget: f64) -> Result<Vec<f64>> {
    match waterfill(gains, budget) {
        Ok(wf) => Ok(wf.powers),
        Err(Error::NoGain) => Ok(vec![0.0; gains.len()]),
        Err(e) => Err(e),
    }
}

fn check_budget(channel: &MimoChannel, budget: f64, noise_var: f64) -> Result<()> {
    if channel.n_bins() == 0 || channel.n_users() == 0 {
        return Err(Error::InvalidArgument("empty MIMO channel".into()));
    }
    if !(budget > 0.0 && noise_var > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "budget ({budget}) and noise variance ({noise_var}) must be positive"
        )));
    }
    Ok(())
}

/// Zero-forcing towards all `K` users on every bin, budget split equally
/// across bins and water-filled across users within a bin.
pub fn zf_sum_rate(channel: &MimoChannel, budget: f64, noise_var: f64) -> Result<ZfOutcome> {
    check_budget(channel, budget, noise_var)?;
    let (k, m) = (channel.n_users(), channel.n_antennas());
    if m < k {
        return Err(Error::InvalidArgument(format!(
            "zero-forcing all users needs M >= K ({m} antennas, {k} users)"
        )));
    }
    let users: Vec<usize> = (0..k).collect();
    let per_bin_budget = budget / channel.n_bins() as f64;
    let bins: Vec<Result<(ZfBin, Vec<f64>)>> = channel
        .per_bin
        .par_iter()
        .map(|h| {
            let zb = zf_bin(h, &users);
            let snr: Vec<f64> = zb.gains.iter().map(|g| g / noise_var).collect();
            let powers = fill(&snr, per_bin_budget)?;
            Ok((zb, powers))
        })
        .collect();

    let mut out = ZfOutcome {
        sum_rate: 0.0,
        per_bin_rate: Vec::with_capacity(channel.n_bins()),
        precoders: Vec::with_capacity(channel.n_bins()),
        rank_deficient_bins: vec![],
        max_residual_interference: 0.0,
    };
    for (n, bin) in bins.into_iter().enumerate() {
        let (zb, powers) = bin?;
        let rate: f64 = zb
            .gains
            .iter()
            .zip(&powers)
            .map(|(g, p)| log2_1p(p * g / noise_var))
            .sum();
        if zb.rank_deficient {
            out.rank_deficient_bins.push(n);
        } else {
            out.max_residual_interference = out.max_residual_interference.max(zb.residual);
        }
        out.per_bin_rate.push(rate);
        out.precoders.push(BinPrecoder {
            users: users.clone(),
            vectors: zb.vectors,
            powers,
            gains: zb.gains,
        });
    }
    out.sum_rate = out.per_bin_rate.iter().sum::<f64>() / channel.n_bins() as f64;
    Ok(out)
}

/// Greedy semi-orthogonal user order of one bin and the ZF gains of every
/// prefix of that order.
struct UserOrder {
    users: Vec<usize>,
    prefix_gains: Vec<Vec<f64>>,
}

/// Stops adding users once the best remaining residual falls below this
/// fraction of that user's channel energy.
const SELECTION_RESIDUAL_TOL: f64 = 1e-10;

fn greedy_order(h: &DMatrix<Complex64>) -> UserOrder {
    let (k, m) = (h.nrows(), h.ncols());
    let energy: Vec<f64> = (0..k).map(|u| h.row(u).norm_squared()).collect();
    // residuals after projecting out the chosen users (modified Gram-Schmidt)
    let mut residual: Vec<DVector<Complex64>> = (0..k).map(|u| user_vector(h, u)).collect();
    let mut remaining: Vec<usize> = (0..k).collect();
    let mut order = UserOrder {
        users: vec![],
        prefix_gains: vec![],
    };
    while !remaining.is_empty() && order.users.len() < m {
        let (i, res) = remaining
            .iter()
            .enumerate()
            .map(|(i, &u)| (i, residual[u].norm_squared()))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let u = remaining[i];
        if !(res > SELECTION_RESIDUAL_TOL * energy[u]) {
            break;
        }
        remaining.remove(i);
        let q = residual[u].unscale(res.sqrt());
        for &v in &remaining {
            let coef = q.dotc(&residual[v]);
            residual[v].axpy(-coef, &q, Complex64::new(1.0, 0.0));
        }
        order.users.push(u);
        order.prefix_gains.push(zf_gains(h, &order.users));
    }
    order
}

/// Best prefix of `order` for a bin holding `power`, with its rate.
fn best_prefix(order: &UserOrder, power: f64, noise_var: f64) -> Result<(usize, f64)> {
    let mut best = (1, f64::NEG_INFINITY);
    for (s, gains) in order.prefix_gains.iter().enumerate() {
        let snr: Vec<f64> = gains.iter().map(|g| g / noise_var).collect();
        let rate = if power > 0.0 {
            let p = fill(&snr, power)?;
            snr.iter().zip(&p).map(|(g, p)| log2_1p(g * p)).sum()
        } else {
            0.0
        };
        if rate > best.1 * (1.0 + 1e-12) + 1e-15 {
            best = (s + 1, rate);
        }
    }
    Ok(best)
}

/// Zero-forcing with per-bin user selection.
///
/// Each bin orders its users greedily by the energy they keep after
/// projecting out the users already chosen, so every prefix of the order is
/// a well-conditioned ZF group. The served prefix of every bin and the
/// joint power allocation over all (bin, user) streams are then improved
/// alternately, starting from one user per bin (matched filtering). Both
/// steps never lower the sum rate.
pub fn zf_scheduled_sum_rate(channel: &MimoChannel, budget: f64, noise_var: f64) -> Result<ZfOutcome> {
    check_budget(channel, budget, noise_var)?;
    let orders: Vec<UserOrder> = channel.per_bin.par_iter().map(greedy_order).collect();
    let n_bins = channel.n_bins();
    let mut chosen: Vec<usize> = orders.iter().map(|o| o.users.len().min(1)).collect();

    let joint = |chosen: &[usize]| -> Result<(Vec<Vec<f64>>, f64)> {
        let mut snr = Vec::new();
        for (o, &s) in orders.iter().zip(chosen) {
            if s > 0 {
                snr.extend(o.prefix_gains[s - 1].iter().map(|g| g / noise_var));
            }
        }
        let flat = fill(&snr, budget)?;
        let rate = snr.iter().zip(&flat).map(|(g, p)| log2_1p(g * p)).sum::<f64>();
        let mut powers = Vec::with_capacity(n_bins);
        let mut at = 0;
        for &s in chosen {
            powers.push(flat[at..at + s].to_vec());
            at += s;
        }
        Ok((powers, rate))
    };

    let (mut powers, mut rate) = joint(&chosen)?;
    for _ in 0..50 {
        let mut changed = false;
        for (n, o) in orders.iter().enumerate() {
            let p_bin: f64 = powers[n].iter().sum();
            if o.users.is_empty() || p_bin <= 0.0 {
                continue;
            }
            let (s, r) = best_prefix(o, p_bin, noise_var)?;
            let current: f64 = o.prefix_gains[chosen[n] - 1]
                .iter()
                .zip(&powers[n])
                .map(|(g, p)| log2_1p(g * p / noise_var))
                .sum();
            if s != chosen[n] && r > current * (1.0 + 1e-12) {
                chosen[n] = s;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let (p, r) = joint(&chosen)?;
        debug_assert!(r >= rate * (1.0 - 1e-12));
        powers = p;
        rate = r;
    }

    let mut out = ZfOutcome {
        sum_rate: rate / n_bins as f64,
        per_bin_rate: Vec::with_capacity(n_bins),
        precoders: Vec::with_capacity(n_bins),
        rank_deficient_bins: vec![],
        max_residual_interference: 0.0,
    };
    for (n, o) in orders.iter().enumerate() {
        let users = o.users[..chosen[n]].to_vec();
        let (vectors, gains, residual) = if users.is_empty() {
            (DMatrix::zeros(channel.n_antennas(), 0), vec![], 0.0)
        } else {
            let zb = zf_bin(&channel.per_bin[n], &users);
            (zb.vectors, zb.gains, zb.residual)
        };
        out.max_residual_interference = out.max_residual_interference.max(residual);
        out.per_bin_rate.push(
            gains
                .iter()
                .zip(&powers[n])
                .map(|(g, p)| log2_1p(g * p / noise_var))
                .sum(),
        );
        out.precoders.push(BinPrecoder {
            users,
            vectors,
            powers: powers[n].clone(),
            gains,
        });
    }
    Ok(out)
}

/// Single-RF-chain transmitter: one frequency-flat unit-modulus analog
/// vector, one served user per bin and water-filled bin powers.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridOutcome {
    pub sum_rate: f64,
    /// Unit-modulus phase-shifter settings, length `M`.
    pub analog: Vec<Complex64>,
    pub served: Vec<usize>,
    pub powers: Vec<f64>,
    /// Objective after initialization and after each sweep.
    pub history: Vec<f64>,
}

/// Relative improvement per sweep below which the ascent stops.
pub const HYBRID_REL_TOL: f64 = 1e-8;
pub const HYBRID_MAX_SWEEPS: usize = 100;
/// Number of starting points carried through the ascent.
pub const HYBRID_STARTS: usize = 4;
/// Subbands per user contributing a starting point.
const HYBRID_SUBBANDS: usize = 8;
/// Phase steps tried when the closed-form update is rejected.
const PHASE_SCAN: usize = 16;
const PHASE_REFINE_MIN: f64 = 1e-6;
const PHASE_REFINE_TRIALS: usize = 32;

struct HybridState {
    /// `c[k * N + n] = g_{k,n}^H w`.
    response: Vec<Complex64>,
    rate: f64,
    served: Vec<usize>,
    gains: Vec<f64>,
    powers: Vec<f64>,
}

struct HybridProblem<'a> {
    channel: &'a MimoChannel,
    budget: f64,
    /// `M * sigma^2`: the analog vector carries `||w||^2 = M`.
    gain_scale: f64,
    /// `conj_cols[m][k * N + n] = conj(g_{k,n}[m])`.
    conj_cols: Vec<Vec<Complex64>>,
}

impl<'a> HybridProblem<'a> {
    fn new(channel: &'a MimoChannel, budget: f64, noise_var: f64) -> Self {
        let (k_users, n_bins, m) = (channel.n_users(), channel.n_bins(), channel.n_antennas());
        let conj_cols = (0..m)
            .map(|a| {
                let mut col = vec![Complex64::new(0.0, 0.0); k_users * n_bins];
                for (n, h) in channel.per_bin.iter().enumerate() {
                    for k in 0..k_users {
                        col[k * n_bins + n] = h[(k, a)].conj();
                    }
                }
                col
            })
            .collect();
        Self {
            channel,
            budget,
            gain_scale: m as f64 * noise_var,
            conj_cols,
        }
    }

    fn state_from_response(&self, response: Vec<Complex64>) -> Result<HybridState> {
        let (k_users, n_bins) = (self.channel.n_users(), self.channel.n_bins());
        let mut served = vec![0; n_bins];
        let mut gains = vec![0.0; n_bins];
        for k in 0..k_users {
            for (n, c) in response[k * n_bins..(k + 1) * n_bins].iter().enumerate() {
                let v = c.norm_sqr();
                if v > gains[n] {
                    gains[n] = v;
                    served[n] = k;
                }
            }
        }
        for g in gains.iter_mut() {
            *g /= self.gain_scale;
        }
        let powers = fill(&gains, self.budget)?;
        let rate = gains.iter().zip(&powers).map(|(g, p)| log2_1p(g * p)).sum::<f64>() / n_bins as f64;
        Ok(HybridState {
            response,
            rate,
            served,
            gains,
            powers,
        })
    }

    fn response(&self, w: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.channel.n_users() * self.channel.n_bins()];
        for (col, &wm) in self.conj_cols.iter().zip(w) {
            for (o, c) in out.iter_mut().zip(col) {
                *o += c * wm;
            }
        }
        out
    }

    fn evaluate(&self, w: &[Complex64]) -> Result<HybridState> {
        self.state_from_response(self.response(w))
    }

    /// Response after changing coordinate `m` by `step`.
    fn shifted_response(&self, base: &[Complex64], m: usize, step: Complex64) -> Vec<Complex64> {
        base.iter().zip(&self.conj_cols[m]).map(|(b, c)| b + c * step).collect()
    }

    /// `sum_n omega_n g g^H` over the served users, with
    /// `omega_n = p_n / (1 + p_n gamma_n)`, the derivative of each bin's
    /// rate with respect to its gain.
    fn surrogate(&self, state: &HybridState) -> DMatrix<Complex64> {
        let m = self.channel.n_antennas();
        let mut b = DMatrix::zeros(m, m);
        for (n, h) in self.channel.per_bin.iter().enumerate() {
            let weight = state.powers[n] / (1.0 + state.powers[n] * state.gains[n]);
            if weight <= 0.0 {
                continue;
            }
            let g = user_vector(h, state.served[n]);
            b += (&g * g.adjoint()) * Complex64::new(weight, 0.0);
        }
        b
    }
}

/// Objective of the single-RF-chain transmitter for a given analog vector.
pub fn hybrid_objective(channel: &MimoChannel, analog: &[Complex64], budget: f64, noise_var: f64) -> Result<f64> {
    let problem = HybridProblem::new(channel, budget, noise_var);
    Ok(problem.evaluate(analog)?.rate)
}

fn unit_phase(z: Complex64) -> Complex64 {
    if z.norm() > 0.0 {
        z / z.norm()
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// Sum rate of the single-RF-chain hybrid transmitter.
///
/// The phases start from the principal eigenvector of
/// `sum_{k,n} g_{k,n} g_{k,n}^H` and are refined by cyclic coordinate
/// ascent: each phase is set in closed form to maximize the
/// rate-weighted beamforming gain with the other phases fixed, and the move
/// is kept only if the true sum rate does not drop.
pub fn hybrid_single_rf_sum_rate(channel: &MimoChannel, budget: f64, noise_var: f64) -> Result<HybridOutcome> {
    check_budget(channel, budget, noise_var)?;
    let m = channel.n_antennas();
    let problem = HybridProblem::new(channel, budget, noise_var);

    // starting points: the dominant direction of all channels, of each
    // user, and of each user within each of a few contiguous subbands
    let n_bins = channel.n_bins();
    let n_sub = n_bins.min(HYBRID_SUBBANDS);
    let mut starts = Vec::new();
    let mut total = DMatrix::<Complex64>::zeros(m, m);
    for k in 0..channel.n_users() {
        let mut user_cov = DMatrix::<Complex64>::zeros(m, m);
        for sb in 0..n_sub {
            let mut cov = DMatrix::<Complex64>::zeros(m, m);
            for h in &channel.per_bin[sb * n_bins / n_sub..(sb + 1) * n_bins / n_sub] {
                let g = user_vector(h, k);
                cov += &g * g.adjoint();
            }
            if n_sub > 1 {
                starts.push(principal_phases(&cov)?);
            }
            user_cov += cov;
        }
        starts.push(principal_phases(&user_cov)?);
        total += user_cov;
    }
    starts.insert(0, principal_phases(&total)?);

    let mut scored = Vec::with_capacity(starts.len());
    for w in starts {
        let state = problem.evaluate(&w)?;
        scored.push((w, state));
    }
    // stable: ties keep the global start first
    scored.sort_by(|a, b| b.1.rate.total_cmp(&a.1.rate));
    scored.truncate(HYBRID_STARTS);

    let mut best: Option<HybridOutcome> = None;
    for (w, state) in scored {
        let out = problem.ascend(w, state)?;
        if best.as_ref().is_none_or(|b| out.sum_rate > b.sum_rate) {
            best = Some(out);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Unit-modulus vector with the phases of the principal eigenvector.
fn principal_phases(cov: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    Ok(eigh(cov)?.vectors.column(0).iter().map(|&v| unit_phase(v)).collect())
}

impl HybridProblem<'_> {
    fn try_move(&self, state: &HybridState, w: &[Complex64], coord: usize, candidate: Complex64) -> Result<Option<HybridState>> {
        if candidate == w[coord] {
            return Ok(None);
        }
        let response = self.shifted_response(&state.response, coord, candidate - w[coord]);
        let trial = self.state_from_response(response)?;
        Ok((trial.rate > state.rate).then_some(trial))
    }

    /// Cyclic closed-form phase updates until they stall, then sweeps that
    /// also scan and refine the phases the closed form cannot move.
    fn ascend(&self, mut w: Vec<Complex64>, mut state: HybridState) -> Result<HybridOutcome> {
        let m = w.len();
        let mut history = vec![state.rate];
        let mut polish = false;
        for _ in 0..HYBRID_MAX_SWEEPS {
            let start = state.rate;
            let b = self.surrogate(&state);
            for coord in 0..m {
                let pull: Complex64 = (0..m).filter(|&l| l != coord).map(|l| b[(coord, l)] * w[l]).sum();
                if pull.norm() > 0.0 {
                    if let Some(next) = self.try_move(&state, &w, coord, unit_phase(pull))? {
                        w[coord] = unit_phase(pull);
                        state = next;
                        continue;
                    }
                }
                if polish {
                    state = self.scan_phase(&mut w, coord, state)?;
                }
            }
            history.push(state.rate);
            if state.rate - start <= HYBRID_REL_TOL * start.abs() {
                if polish {
                    break;
                }
                polish = true;
            }
        }
        Ok(HybridOutcome {
            sum_rate: state.rate,
            analog: w,
            served: state.served,
            powers: state.powers,
            history,
        })
    }

    /// Coarse scan of one phase followed by shrinking two-sided steps.
    fn scan_phase(&self, w: &mut [Complex64], coord: usize, mut state: HybridState) -> Result<HybridState> {
        let mut best_step: Option<(Complex64, HybridState)> = None;
        for i in 1..PHASE_SCAN {
            let candidate = w[coord] * Complex64::from_polar(1.0, 2.0 * PI * i as f64 / PHASE_SCAN as f64);
            let response = self.shifted_response(&state.response, coord, candidate - w[coord]);
            let trial = self.state_from_response(response)?;
            let bar = best_step.as_ref().map_or(state.rate, |(_, s)| s.rate);
            if trial.rate > bar {
                best_step = Some((candidate, trial));
            }
        }
        if let Some((candidate, next)) = best_step {
            w[coord] = candidate;
            state = next;
        }
        let mut step = PI / PHASE_SCAN as f64;
        let mut trials = PHASE_REFINE_TRIALS;
        while step > PHASE_REFINE_MIN && trials > 0 {
            trials -= 1;
            let mut moved = false;
            for sign in [1.0, -1.0] {
                let candidate = w[coord] * Complex64::from_polar(1.0, sign * step);
                if let Some(next) = self.try_move(&state, w, coord, candidate)? {
                    w[coord] = candidate;
                    state = next;
                    moved = true;
                    break;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lwa::FrequencyGrid;
    use crate::noise::RngStream;
    use crate::scene::{mimo_channel_raw, User};

    fn channel_of(per_bin: Vec<DMatrix<Complex64>>) -> MimoChannel {
        MimoChannel { per_bin, scale: 1.0 }
    }

    fn random_channel(k: usize, m: usize, n: usize, rng: &mut RngStream) -> MimoChannel {
        channel_of(
            (0..n)
                .map(|_| DMatrix::from_fn(k, m, |_, _| rng.complex_gaussian()))
                .collect(),
        )
    }

    fn los_fixture() -> MimoChannel {
        let users = [User::new(0, 25.0, 1.5).unwrap(), User::new(1, 62.0, 3.0).unwrap()];
        let grid = FrequencyGrid::new(200e9, 800e9, 4).unwrap();
        let raw = mimo_channel_raw(&grid, &users, 4);
        let mean = raw.iter().flat_map(|h| h.iter()).map(|v| v.norm_sqr()).sum::<f64>() / 32.0;
        channel_of(raw.into_iter().map(|h| h / Complex64::new(mean.sqrt(), 0.0)).collect())
    }

    #[test]
    fn zf_single_user_is_matched_filter() {
        let mut rng = RngStream::new(3, 77, 0);
        let ch = random_channel(1, 4, 3, &mut rng);
        let out = zf_sum_rate(&ch, 3.0, 0.5).unwrap();
        // one user: each bin carries budget/N = 1 with gain ||g||^2
        let expect: f64 = ch
            .per_bin
            .iter()
            .map(|h| (1.0 + h.row(0).norm_squared() / 0.5).log2())
            .sum::<f64>()
            / 3.0;
        assert!((out.sum_rate - expect).abs() < 1e-12);
        assert!(!out.flagged());
    }

    #[test]
    fn zf_orthogonal_users_are_interference_free() {
        let mut h = DMatrix::<Complex64>::zeros(2, 4);
        h[(0, 0)] = Complex64::new(2.0, 0.0);
        h[(1, 1)] = Complex64::new(0.0, 1.0);
        let ch = channel_of(vec![h]);
        let out = zf_sum_rate(&ch, 2.0, 1.0).unwrap();
        assert_eq!(out.precoders[0].gains, vec![4.0, 1.0]);
        // water-filling 2 units over gains (4, 1): mu = 1.625
        let expect = (1.0 + 4.0 * 1.375f64).log2() + (1.0 + 0.625f64).log2();
        assert!((out.sum_rate - expect).abs() < 1e-12);
        assert_eq!(out.max_residual_interference, 0.0);
    }

    #[test]
    fn zf_fixture_matches_gram_inverse_oracle() {
        let ch = los_fixture();
        let (budget, sigma2) = (4.0, 0.1);
        let out = zf_sum_rate(&ch, budget, sigma2).unwrap();
        assert!(!out.flagged());
        assert!(out.max_residual_interference <= 1e-10);

        // explicit 2x2 Gram inverse and closed-form two-channel water-filling
        let mut total = 0.0;
        for h in &ch.per_bin {
            let a = h.row(0).norm_squared();
            let d = h.row(1).norm_squared();
            let b: Complex64 = (0..4).map(|m| h[(0, m)] * h[(1, m)].conj()).sum();
            let det = a * d - b.norm_sqr();
            let g = [det / d / sigma2, det / a / sigma2];
            let p_bin = budget / 4.0;
            let (hi, lo) = if g[0] >= g[1] { (0, 1) } else { (1, 0) };
            let mu2 = (p_bin + 1.0 / g[0] + 1.0 / g[1]) / 2.0;
            let mut p = [0.0; 2];
            if mu2 > 1.0 / g[lo] {
                p = [mu2 - 1.0 / g[0], mu2 - 1.0 / g[1]];
            } else {
                p[hi] = p_bin;
            }
            total += (1.0 + p[0] * g[0]).log2() + (1.0 + p[1] * g[1]).log2();
        }
        assert!((out.sum_rate - total / 4.0).abs() < 1e-10, "{} vs {}", out.sum_rate, total / 4.0);
    }

    #[test]
    fn zf_flags_coincident_users() {
        let users = [User::new(0, 40.0, 2.0).unwrap(), User::new(1, 40.0, 2.0).unwrap()];
        let grid = FrequencyGrid::new(200e9, 800e9, 2).unwrap();
        let ch = channel_of(mimo_channel_raw(&grid, &users, 4));
        let out = zf_sum_rate(&ch, 2.0, 1e-12).unwrap();
        assert_eq!(out.rank_deficient_bins, vec![0, 1]);
        assert!(out.sum_rate.is_finite());
    }

    #[test]
    fn zf_requires_enough_antennas() {
        let mut rng = RngStream::new(3, 77, 1);
        let ch = random_channel(3, 2, 2, &mut rng);
        assert!(zf_sum_rate(&ch, 1.0, 1.0).is_err());
        assert!(zf_scheduled_sum_rate(&ch, 1.0, 1.0).is_ok());
    }

    #[test]
    fn scheduled_zf_serves_subsets_of_clustered_users() {
        // users one degree apart at the low end of the band look identical
        let users: Vec<User> = (0..6).map(|i| User::new(i, 40.0 + i as f64, 2.0).unwrap()).collect();
        let grid = FrequencyGrid::new(200e9, 800e9, 8).unwrap();
        let ch = channel_of(mimo_channel_raw(&grid, &users, 6));
        let sigma2 = 1e-13;
        let all = zf_sum_rate(&ch, 8.0, sigma2).unwrap();
        let sched = zf_scheduled_sum_rate(&ch, 8.0, sigma2).unwrap();
        assert!(sched.sum_rate >= all.sum_rate);
        assert!(sched.mean_served() < 6.0);
        assert!(sched.max_residual_interference <= 1e-10);
    }

    #[test]
    fn hybrid_single_antenna_phase_irrelevant() {
        let mut rng = RngStream::new(9, 77, 2);
        let ch = random_channel(3, 1, 5, &mut rng);
        let a = hybrid_objective(&ch, &[Complex64::new(1.0, 0.0)], 5.0, 0.3).unwrap();
        let b = hybrid_objective(&ch, &[Complex64::from_polar(1.0, 2.1)], 5.0, 0.3).unwrap();
        assert!((a - b).abs() < 1e-12);
        let out = hybrid_single_rf_sum_rate(&ch, 5.0, 0.3).unwrap();
        assert!((out.sum_rate - a).abs() < 1e-12);
    }

    #[test]
    fn hybrid_single_user_single_bin_aligns_phases() {
        let mut rng = RngStream::new(9, 77, 3);
        let ch = random_channel(1, 6, 1, &mut rng);
        let out = hybrid_single_rf_sum_rate(&ch, 1.0, 1.0).unwrap();
        let g = ch.per_bin[0].row(0);
        let response: Complex64 = (0..6).map(|m| g[m].conj() * out.analog[m]).sum();
        let l1: f64 = g.iter().map(|v| v.norm()).sum();
        assert!((response.norm() - l1).abs() < 1e-12 * l1);
        assert!(out.analog.iter().all(|w| (w.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn hybrid_beats_random_phase_search() {
        let ch = los_fixture();
        let (budget, sigma2) = (4.0, 0.1);
        let out = hybrid_single_rf_sum_rate(&ch, budget, sigma2).unwrap();
        assert!(out.history.windows(2).all(|w| w[1] >= w[0]));
        assert!(out.sum_rate >= out.history[0]);
        let mut rng = RngStream::new(123, 77, 4);
        let mut best_random = f64::NEG_INFINITY;
        for _ in 0..10_000 {
            let w: Vec<Complex64> = (0..4)
                .map(|_| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * rng.uniform()))
                .collect();
            best_random = best_random.max(hybrid_objective(&ch, &w, budget, sigma2).unwrap());
        }
        assert!(
            out.sum_rate >= best_random - 1e-6,
            "optimized {} < best random {}",
            out.sum_rate,
            best_random
        );
    }

    #[test]
    fn digital_dominates_hybrid_on_random_instances() {
        let mut rng = RngStream::new(2718, 77, 5);
        for trial in 0..100 {
            let k = 1 + rng.below(3) as usize;
            let m = k + rng.below(3) as usize;
            let n = 1 + rng.below(4) as usize;
            let ch = random_channel(k, m, n, &mut rng);
            let sigma2 = 10f64.powf(rng.uniform_range(-2.0, 1.5));
            let budget = n as f64;
            let zf = zf_scheduled_sum_rate(&ch, budget, sigma2).unwrap();
            let hy = hybrid_single_rf_sum_rate(&ch, budget, sigma2).unwrap();
            assert!(
                zf.sum_rate >= hy.sum_rate * (1.0 - 1e-12),
                "trial {trial}: zf {} < hybrid {}",
                zf.sum_rate,
                hy.sum_rate
            );
        }
    }
}
