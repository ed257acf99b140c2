//! Multi-user downlink over the LWA: subcarrier assignment, water-filling,
//! sum-rate evaluation and waveguide tuning.
//!
//! Each subcarrier is an orthogonal resource that serves one user. For a
//! fixed power vector the rate of bin `n` is increasing in the served gain,
//! so giving every bin to its strongest user is optimal; water-filling the
//! powers over those best gains is then the optimum of the remaining concave
//! problem. Together they maximize the FDMA sum rate.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lwa::{self, WaveguideGeometry};
use crate::scene::{self, LwaChannel, Scenario};

/// Subcarrier-to-user policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssignPolicy {
    /// Each bin goes to the user with the largest channel power.
    #[default]
    MaxGain,
    /// Max-gain, then the cheapest bins are handed to starved users until
    /// each holds at least `max(1, floor(N / 2K))` bins.
    Fair,
}

/// Spectrum map and per-bin powers for one downlink frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    /// `assignment[n]` is the user served on bin `n`.
    pub assignment: Vec<Option<usize>>,
    pub powers: Vec<f64>,
    pub budget: f64,
}

impl AllocationPlan {
    /// Checks the plan invariants: non-negative powers, zero power on idle
    /// bins and total power within the budget.
    pub fn validate(&self, n_users: usize) -> Result<()> {
        if self.assignment.len() != self.powers.len() {
            return Err(Error::Infeasible("assignment and power lengths differ".into()));
        }
        let mut total = 0.0;
        for (n, (&a, &p)) in self.assignment.iter().zip(&self.powers).enumerate() {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::Infeasible(format!("bin {n} has power {p}")));
            }
            match a {
                None if p > 0.0 => {
                    return Err(Error::Infeasible(format!("idle bin {n} carries power")));
                }
                Some(k) if k >= n_users => {
                    return Err(Error::Infeasible(format!("bin {n} serves unknown user {k}")));
                }
                _ => {}
            }
            total += p;
        }
        if total > self.budget * (1.0 + 1e-12) {
            return Err(Error::Infeasible(format!(
                "total power {total} exceeds budget {}",
                self.budget
            )));
        }
        Ok(())
    }

    pub fn bins_of(&self, user: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, a)| **a == Some(user))
            .map(|(n, _)| n)
    }
}

fn strongest_user(channel: &LwaChannel, bin: usize) -> usize {
    let mut best = 0;
    for k in 1..channel.n_users() {
        // strict comparison keeps ties on the lower index
        if channel.power(k, bin) > channel.power(best, bin) {
            best = k;
        }
    }
    best
}

pub fn assign_subcarriers(channel: &LwaChannel, policy: AssignPolicy) -> Result<Vec<Option<usize>>> {
    let (k_users, n_bins) = (channel.n_users(), channel.n_bins());
    if k_users == 0 {
        return Err(Error::Infeasible("no users to serve".into()));
    }
    let mut assignment: Vec<usize> = (0..n_bins).map(|n| strongest_user(channel, n)).collect();
    if policy == AssignPolicy::Fair {
        if n_bins < k_users {
            return Err(Error::Infeasible(format!(
                "fair assignment needs at least one bin per user ({n_bins} bins, {k_users} users)"
            )));
        }
        let quota = (n_bins / (2 * k_users)).max(1);
        let mut held = vec![0usize; k_users];
        for &k in &assignment {
            held[k] += 1;
        }
        for user in 0..k_users {
            while held[user] < quota {
                // cheapest bin among donors that stay at or above quota
                let mut pick: Option<(usize, f64)> = None;
                for (n, &owner) in assignment.iter().enumerate() {
                    if owner == user || held[owner] <= quota {
                        continue;
                    }
                    let loss = channel.power(owner, n) - channel.power(user, n);
                    if pick.is_none_or(|(_, best)| loss < best) {
                        pick = Some((n, loss));
                    }
                }
                let (n, _) = pick.ok_or_else(|| {
                    Error::Infeasible(format!("no donor bin left for user {user}"))
                })?;
                held[assignment[n]] -= 1;
                assignment[n] = user;
                held[user] += 1;
            }
        }
    }
    Ok(assignment.into_iter().map(Some).collect())
}

/// Water-filling solution.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFill {
    pub powers: Vec<f64>,
    /// Common level `mu` with `p_n = max(0, mu - 1/gamma_n)`.
    pub water_level: f64,
}

/// Maximizes `sum log2(1 + p_n gamma_n)` subject to `sum p_n = budget`.
///
/// The active set is found exactly from the sorted breakpoints `1/gamma_n`:
/// with the `j` strongest channels active the level is
/// `mu_j = (budget + sum_{i<j} 1/gamma_i) / j`, and the answer is the largest
/// `j` whose weakest member still gets positive power.
pub fn waterfill(gains: &[f64], budget: f64) -> Result<WaterFill> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::InvalidArgument(format!("power budget must be positive, got {budget}")));
    }
    if let Some(bad) = gains.iter().find(|g| !(**g >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative or NaN gain {bad}")));
    }
    let mut order: Vec<usize> = (0..gains.len()).filter(|&n| gains[n] > 0.0).collect();
    if order.is_empty() {
        return Err(Error::NoGain);
    }
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));

    let mut floor_sum = 0.0;
    let mut level = 0.0;
    for (j, &n) in order.iter().enumerate() {
        let floor = gains[n].recip();
        let candidate = (budget + floor_sum + floor) / (j + 1) as f64;
        if j > 0 && candidate <= floor {
            break;
        }
        floor_sum += floor;
        level = candidate;
    }
    let powers = gains
        .iter()
        .map(|&g| if g > 0.0 { (level - g.recip()).max(0.0) } else { 0.0 })
        .collect();
    Ok(WaterFill {
        powers,
        water_level: level,
    })
}

/// Effective per-bin SNR gains `|h[a(n)][n]|^2 / sigma^2` of an assignment.
pub fn effective_gains(channel: &LwaChannel, assignment: &[Option<usize>], noise_var: f64) -> Vec<f64> {
    assignment
        .iter()
        .enumerate()
        .map(|(n, a)| a.map_or(0.0, |k| channel.power(k, n) / noise_var))
        .collect()
}

/// Assignment under `policy` followed by water-filling with `budget`.
pub fn allocate(
    channel: &LwaChannel,
    policy: AssignPolicy,
    budget: f64,
    noise_var: f64,
) -> Result<AllocationPlan> {
    let assignment = assign_subcarriers(channel, policy)?;
    let gains = effective_gains(channel, &assignment, noise_var);
    let wf = waterfill(&gains, budget)?;
    Ok(AllocationPlan {
        assignment,
        powers: wf.powers,
        budget,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SumRate {
    /// Bits per second per hertz, averaged over bins.
    pub total: f64,
    pub per_user: Vec<f64>,
}

/// `R = (1/N) sum_n log2(1 + p_n |h[a(n)][n]|^2 / sigma^2)` with the
/// per-user split.
pub fn sum_rate(channel: &LwaChannel, plan: &AllocationPlan, noise_var: f64) -> SumRate {
    let n_bins = channel.n_bins() as f64;
    let mut per_user = vec![0.0; channel.n_users()];
    for (n, (a, &p)) in plan.assignment.iter().zip(&plan.powers).enumerate() {
        if let Some(k) = *a {
            per_user[k] += (p * channel.power(k, n) / noise_var).ln_1p() / std::f64::consts::LN_2 / n_bins;
        }
    }
    SumRate {
        total: per_user.iter().sum(),
        per_user,
    }
}

/// Finite grids over plate separation and slit length. Candidates use the
/// 90%-leakage rule for their leakage constant.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySearch {
    pub plate_sep: Vec<f64>,
    pub slit_len: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunedGeometry {
    pub geom: WaveguideGeometry,
    pub sum_rate: f64,
    /// Score of every candidate, `(plate_sep, slit_len, rate)`, in search
    /// order; infeasible cells score negative infinity.
    pub scores: Vec<(f64, f64, f64)>,
}

fn score_geometry(scenario: &Scenario, geom: WaveguideGeometry, policy: AssignPolicy) -> f64 {
    let Ok(bound) = scenario.with_geometry(geom) else {
        return f64::NEG_INFINITY;
    };
    let Ok(channel) = scene::lwa_channel(&bound) else {
        return f64::NEG_INFINITY;
    };
    let noise = bound.noise_variance();
    match allocate(&channel, policy, bound.total_power(), noise) {
        Ok(plan) => sum_rate(&channel, &plan, noise).total,
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Exhaustive search for the waveguide maximizing the sum rate. Ties go to
/// the smaller plate separation, then the shorter slit.
pub fn tune_geometry(
    scenario: &Scenario,
    search: &GeometrySearch,
    policy: AssignPolicy,
) -> Result<TunedGeometry> {
    if search.plate_sep.is_empty() || search.slit_len.is_empty() {
        return Err(Error::EmptySearchGrid);
    }
    let mut cells: Vec<(f64, f64)> = search
        .plate_sep
        .iter()
        .flat_map(|&b| search.slit_len.iter().map(move |&l| (b, l)))
        .collect();
    cells.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    cells.dedup();

    let scores: Vec<(f64, f64, f64)> = cells
        .par_iter()
        .map(|&(b, l)| {
            let rate = WaveguideGeometry::with_default_leakage(b, l)
                .map_or(f64::NEG_INFINITY, |g| score_geometry(scenario, g, policy));
            (b, l, rate)
        })
        .collect();

    let mut best: Option<(f64, f64, f64)> = None;
    for &cell in &scores {
        if cell.2 > best.map_or(f64::NEG_INFINITY, |b| b.2) {
            best = Some(cell);
        }
    }
    let (b, l, rate) = best.ok_or_else(|| {
        Error::Infeasible("every candidate geometry puts the cutoff inside the band".into())
    })?;
    Ok(TunedGeometry {
        geom: WaveguideGeometry::with_default_leakage(b, l)?,
        sum_rate: rate,
        scores,
    })
}

/// Level reported for cells with no radiated energy.
pub const ENERGY_FLOOR_DB: f64 = -120.0;

/// Radiated energy over (angle, frequency), normalized to a 0 dB maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPattern {
    pub angles_deg: Vec<f64>,
    pub freqs_hz: Vec<f64>,
    /// `angles x bins`, in dB, floored at [`ENERGY_FLOOR_DB`].
    pub energy_db: DMatrix<f64>,
}

/// `E(phi, f_n) = p_n |G(f_n, phi)|^2`, normalized to its maximum.
pub fn beampattern_field(
    geom: &WaveguideGeometry,
    grid: &lwa::FrequencyGrid,
    plan: &AllocationPlan,
    angles_deg: &[f64],
) -> Result<BeamPattern> {
    if plan.powers.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "plan covers {} bins, grid has {}",
            plan.powers.len(),
            grid.len()
        )));
    }
    if let Some(&bad) = angles_deg.iter().find(|a| !(**a > 0.0 && **a < 90.0)) {
        return Err(Error::AngleOutOfRange {
            angle_deg: bad,
            range: "(0, 90)",
        });
    }
    let freqs = grid.centers();
    let mut energy = DMatrix::zeros(angles_deg.len(), freqs.len());
    for (n, &f) in freqs.iter().enumerate() {
        let p = plan.powers[n];
        if p == 0.0 {
            continue;
        }
        for (i, &phi) in angles_deg.iter().enumerate() {
            energy[(i, n)] = p * lwa::aperture_gain(geom, f, phi)?.norm_sqr();
        }
    }
    let peak = energy.iter().cloned().fold(0.0, f64::max);
    let floor_lin = 10f64.powf(ENERGY_FLOOR_DB / 10.0);
    let energy_db = energy.map(|e| {
        if peak > 0.0 && e / peak > floor_lin {
            10.0 * (e / peak).log10()
        } else {
            ENERGY_FLOOR_DB
        }
    });
    Ok(BeamPattern {
        angles_deg: angles_deg.to_vec(),
        freqs_hz: freqs,
        energy_db,
    })
}
