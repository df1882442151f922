//! Local POD: adaptive halving of the `μ_u` interval, one reduced model per
//! sub-interval.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::Problem;
use crate::linalg::dense::sym_eig_desc;
use crate::rom::{build_aggregated, correlation_matrix, pod, ControlReduction, ReducedModel, SnapshotSet, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpodSettings {
    /// Basis size per variable and index of the tested eigenvalue.
    pub n: usize,
    pub tau: f64,
    /// Maximum number of splits.
    pub max_splits: usize,
    /// Compare `λ_N` itself with `τ` instead of `λ_N / λ₁`.
    pub absolute_tau: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Split,
    Accept,
    /// Criterion failed but the split budget was used up.
    AcceptExhausted,
    /// Fewer than `N` snapshots; basis size capped.
    AcceptFewSnapshots,
    /// A child would hold no snapshots.
    AcceptEmptyChild,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitEvent {
    pub lo: f64,
    pub hi: f64,
    pub n_snapshots: usize,
    /// The tested value (`λ_N` or `λ_N / λ₁`), `None` when not computable.
    pub criterion: Option<f64>,
    pub decision: Decision,
}

#[derive(Debug, Clone)]
pub struct LocalInterval {
    pub lo: f64,
    pub hi: f64,
    pub n_snapshots: usize,
    pub n_modes: usize,
    pub eig_y: Vec<f64>,
    pub eig_p: Vec<f64>,
    pub decision: Decision,
    pub model: ReducedModel,
}

#[derive(Debug, Clone)]
pub struct IntervalPartition {
    /// Sorted by `lo`; pairwise disjoint `(lo, hi]`.
    pub intervals: Vec<LocalInterval>,
    pub split_log: Vec<SplitEvent>,
    pub settings: LpodSettings,
}

/// Columns whose `μ_u` lies in `(lo, hi]`, or `[lo, hi]` when `closed_left`.
fn members(s: &SnapshotSet, lo: f64, hi: f64, closed_left: bool) -> Vec<usize> {
    (0..s.len())
        .filter(|&c| {
            let m = s.params[c].muu;
            (m > lo || (closed_left && m == lo)) && m <= hi
        })
        .collect()
}

fn state_criterion(problem: &Problem, s: &SnapshotSet, n: usize, absolute: bool) -> Option<f64> {
    let (lambda, _) = sym_eig_desc(&correlation_matrix(&s.y, problem.norm_matrix()));
    let l1 = lambda.first().copied().unwrap_or(0.0).max(0.0);
    let ln = lambda.get(n - 1).copied()?.max(0.0);
    if absolute {
        Some(ln)
    } else if l1 > 0.0 {
        Some(ln / l1)
    } else {
        Some(0.0)
    }
}

/// Runs the halving procedure on `interval` and builds one local model per
/// accepted sub-interval. Snapshots are partitioned, never recomputed.
pub fn lpod_offline(
    problem: &Problem,
    snapshots: &SnapshotSet,
    interval: (f64, f64),
    settings: LpodSettings,
    control: ControlReduction<'_>,
) -> Result<IntervalPartition> {
    if settings.n == 0 || !(settings.tau > 0.0) || settings.max_splits == 0 {
        return Err(Error::InvalidArgument(format!("invalid L-POD settings {settings:?}")));
    }
    let (a, b) = interval;
    if members(snapshots, a, b, true).is_empty() {
        return Err(Error::InvalidArgument("no snapshots inside the μ_u interval".into()));
    }
    let mut list = VecDeque::from([(a, b)]);
    let mut splits = 0;
    let mut log = Vec::new();
    let mut accepted = Vec::new();
    while let Some((lo, hi)) = list.pop_front() {
        let cols = members(snapshots, lo, hi, lo == a);
        let local = snapshots.select(&cols);
        let mut event = SplitEvent {
            lo,
            hi,
            n_snapshots: cols.len(),
            criterion: None,
            decision: Decision::Accept,
        };
        if cols.len() < settings.n {
            event.decision = Decision::AcceptFewSnapshots;
        } else {
            let value = state_criterion(problem, &local, settings.n, settings.absolute_tau);
            event.criterion = value;
            if value.is_some_and(|v| v > settings.tau) {
                let mid = 0.5 * (lo + hi);
                let left = members(snapshots, lo, mid, lo == a);
                let right = members(snapshots, mid, hi, false);
                event.decision = if splits >= settings.max_splits {
                    Decision::AcceptExhausted
                } else if left.is_empty() || right.is_empty() {
                    log::warn!("interval ({lo}, {hi}] not split: a half holds no snapshots");
                    Decision::AcceptEmptyChild
                } else {
                    splits += 1;
                    list.push_back((lo, mid));
                    list.push_back((mid, hi));
                    Decision::Split
                };
            }
        }
        log.push(event);
        if event.decision != Decision::Split {
            accepted.push((lo, hi, local, event.decision));
        }
    }
    accepted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let intervals = accepted
        .into_iter()
        .map(|(lo, hi, local, decision)| {
            let n = settings.n.min(local.len());
            let by = pod(&local.y, problem.norm_matrix(), n)?;
            let bp = pod(&local.p, problem.norm_matrix(), n)?;
            let agg = build_aggregated(&by, &bp, n, problem.norm_matrix());
            let model = ReducedModel::project(problem, agg.q, Strategy::Lpod, control)?;
            Ok(LocalInterval {
                lo,
                hi,
                n_snapshots: local.len(),
                n_modes: n,
                eig_y: by.eigenvalues,
                eig_p: bp.eigenvalues,
                decision,
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntervalPartition {
        intervals,
        split_log: log,
        settings,
    })
}

/// Index of the interval `(lo, hi]` holding `muu`; the first interval also
/// holds its left end. Values outside are clamped with a warning.
pub fn dispatch(muu: f64, bounds: &[(f64, f64)]) -> usize {
    let (first, last) = (bounds[0].0, bounds[bounds.len() - 1].1);
    if muu <= first {
        if muu < first {
            log::warn!("mu_u = {muu} below {first}; clamped to the first interval");
        }
        return 0;
    }
    if muu > last {
        log::warn!("mu_u = {muu} above {last}; clamped to the last interval");
        return bounds.len() - 1;
    }
    bounds.iter().position(|&(lo, hi)| muu > lo && muu <= hi).unwrap_or(bounds.len() - 1)
}

impl IntervalPartition {
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.intervals.iter().map(|i| (i.lo, i.hi)).collect()
    }

    pub fn dispatch(&self, muu: f64) -> usize {
        dispatch(muu, &self.bounds())
    }

    pub fn model_for(&self, muu: f64) -> &ReducedModel {
        &self.intervals[self.dispatch(muu)].model
    }

    /// `λ̄_n = (1/J) Σ_j λ_n^j` for `n = 1..=n`, shorter spectra padded with zero.
    pub fn averaged_eigenvalues(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let spectra_y: Vec<&[f64]> = self.intervals.iter().map(|i| i.eig_y.as_slice()).collect();
        let spectra_p: Vec<&[f64]> = self.intervals.iter().map(|i| i.eig_p.as_slice()).collect();
        (average_spectra(&spectra_y, n), average_spectra(&spectra_p, n))
    }
}

pub fn average_spectra(spectra: &[&[f64]], n: usize) -> Vec<f64> {
    let j = spectra.len() as f64;
    (0..n)
        .map(|k| spectra.iter().map(|s| s.get(k).copied().unwrap_or(0.0)).sum::<f64>() / j)
        .collect()
}
