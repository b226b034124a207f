//! Objective-space analytics for sets of return vectors (all objectives are
//! maximized): dominance, Pareto and convex-front extraction, hypervolume,
//! and sparsity.

use log::warn;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Above this many objectives [`hypervolume`] switches to Monte Carlo.
pub const EXACT_HV_MAX_DIM: usize = 4;
pub const MC_HV_SAMPLES: usize = 1_000_000;
const MC_CHUNK: usize = 8192;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub points: Vec<Vec<f64>>,
    /// Hypervolume reference; component-wise below every point of interest.
    pub reference: Vec<f64>,
}

impl ParetoFront {
    pub fn new(points: Vec<Vec<f64>>, reference: Vec<f64>) -> Self {
        ParetoFront { points, reference }
    }

    /// Non-dominated subset with the same reference.
    pub fn filtered(&self) -> ParetoFront {
        ParetoFront::new(nondominated_filter(&self.points), self.reference.clone())
    }
}

/// `a` Pareto-dominates `b`: no worse anywhere, strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::shape("dominance comparison", a.len(), b.len()));
    }
    Ok(dominates_unchecked(a, b))
}

#[inline]
fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Indices of the points not dominated by any other input point, in input
/// order. Of several identical points only the first is kept.
pub fn nondominated_indices(points: &[Vec<f64>]) -> Vec<usize> {
    // Only a lexicographically larger point can dominate, so after a
    // descending lexicographic sort each candidate is checked against the
    // survivors found so far.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&points[i], &points[j]);
        b.iter()
            .zip(a)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut survivors: Vec<usize> = Vec::new();
    for &i in &order {
        let p = &points[i];
        let beaten = survivors
            .iter()
            .any(|&s| points[s] == *p || dominates_unchecked(&points[s], p));
        if !beaten {
            survivors.push(i);
        }
    }
    survivors.sort_unstable();
    survivors
}

pub fn nondominated_filter(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    nondominated_indices(points)
        .into_iter()
        .map(|i| points[i].clone())
        .collect()
}

/// Points that attain `max_q wᵀq` for some simplex weight `w` (ties count),
/// restricted to the Pareto-optimal subset. Input order is preserved.
pub fn linear_dominance_filter(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let front = nondominated_filter(points);
    front
        .iter()
        .enumerate()
        .filter(|(i, p)| max_worst_margin(p, &front, *i) >= -tie_tolerance(&front))
        .map(|(_, p)| p.clone())
        .collect()
}

fn tie_tolerance(points: &[Vec<f64>]) -> f64 {
    let scale = points
        .iter()
        .flatten()
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    1e-12 * scale
}

/// max over simplex weights w of min over other points q of wᵀ(p − q).
fn max_worst_margin(p: &[f64], points: &[Vec<f64>], skip: usize) -> f64 {
    let others: Vec<&Vec<f64>> = points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != skip)
        .map(|(_, q)| q)
        .collect();
    if others.is_empty() {
        return 0.0;
    }
    match p.len() {
        1 => others.iter().map(|q| p[0] - q[0]).fold(f64::INFINITY, f64::min),
        2 => margin_two_objectives(p, &others),
        _ => margin_lp(p, &others),
    }
}

/// Piecewise-linear concave maximization over w₁ ∈ [0, 1]: the optimum lies at
/// an endpoint or at a crossing of two constraint lines.
fn margin_two_objectives(p: &[f64], others: &[&Vec<f64>]) -> f64 {
    let lines: Vec<(f64, f64)> = others
        .iter()
        .map(|q| {
            let d1 = p[0] - q[0];
            let d2 = p[1] - q[1];
            (d1 - d2, d2)
        })
        .collect();
    let worst = |t: f64| {
        lines
            .iter()
            .map(|(a, c)| a * t + c)
            .fold(f64::INFINITY, f64::min)
    };
    let mut best = worst(0.0).max(worst(1.0));
    for (i, (a1, c1)) in lines.iter().enumerate() {
        for (a2, c2) in &lines[i + 1..] {
            if a1 != a2 {
                let t = (c2 - c1) / (a1 - a2);
                if (0.0..=1.0).contains(&t) {
                    best = best.max(worst(t));
                }
            }
        }
    }
    best
}

fn margin_lp(p: &[f64], others: &[&Vec<f64>]) -> f64 {
    let m = p.len();
    let bound = others
        .iter()
        .flat_map(|q| q.iter().zip(p).map(|(a, b)| (a - b).abs()))
        .fold(0.0f64, f64::max)
        + 1.0;
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let w: Vec<_> = (0..m).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let s = lp.add_var(1.0, (-bound, bound));
    lp.add_constraint(
        w.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(),
        ComparisonOp::Eq,
        1.0,
    );
    for q in others {
        let mut expr: Vec<_> = w.iter().zip(p.iter().zip(q.iter())).map(|(&v, (a, b))| (v, a - b)).collect();
        expr.push((s, -1.0));
        lp.add_constraint(expr, ComparisonOp::Ge, 0.0);
    }
    match lp.solve() {
        Ok(sol) => sol.objective(),
        Err(e) => {
            warn!("linear-dominance LP failed ({e}); treating point as not supported");
            f64::NEG_INFINITY
        }
    }
}

/// Hypervolume value, with a standard error when estimated by sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hypervolume {
    pub value: f64,
    pub std_error: Option<f64>,
}

fn clip_to_reference(points: &[Vec<f64>], reference: &[f64]) -> Vec<Vec<f64>> {
    let (kept, dropped): (Vec<_>, Vec<_>) = points
        .iter()
        .partition(|p| p.iter().zip(reference).all(|(x, r)| x >= r));
    if !dropped.is_empty() {
        warn!(
            "{} point(s) lie below the hypervolume reference and were ignored",
            dropped.len()
        );
    }
    kept.into_iter().cloned().collect()
}

/// Exact for up to [`EXACT_HV_MAX_DIM`] objectives, Monte Carlo beyond.
pub fn hypervolume(front: &ParetoFront) -> Result<Hypervolume> {
    let m = front.reference.len();
    if let Some(bad) = front.points.iter().find(|p| p.len() != m) {
        return Err(Error::shape("hypervolume point", m, bad.len()));
    }
    if front.points.is_empty() {
        warn!("hypervolume of an empty front is 0");
        return Ok(Hypervolume {
            value: 0.0,
            std_error: None,
        });
    }
    if m <= EXACT_HV_MAX_DIM {
        Ok(Hypervolume {
            value: hypervolume_exact(&front.points, &front.reference),
            std_error: None,
        })
    } else {
        Ok(hypervolume_monte_carlo(
            &front.points,
            &front.reference,
            MC_HV_SAMPLES,
            &Rng::new(0),
        ))
    }
}

/// Lebesgue measure of ∪ₚ [reference, p] by recursive dimension sweep.
pub fn hypervolume_exact(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let pts = clip_to_reference(points, reference);
    if pts.is_empty() {
        return 0.0;
    }
    let front = nondominated_filter(&pts);
    sweep(front, reference)
}

fn sweep(mut pts: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    let m = reference.len();
    match m {
        0 => 1.0,
        1 => pts.iter().map(|p| p[0] - reference[0]).fold(0.0, f64::max),
        2 => {
            pts.sort_by(|a, b| b[0].total_cmp(&a[0]));
            let mut area = 0.0;
            let mut y_top = reference[1];
            for p in &pts {
                if p[1] > y_top {
                    area += (p[0] - reference[0]) * (p[1] - y_top);
                    y_top = p[1];
                }
            }
            area
        }
        _ => {
            // slice along the last axis, from the top down
            let last = m - 1;
            pts.sort_by(|a, b| b[last].total_cmp(&a[last]));
            let mut volume = 0.0;
            let mut active: Vec<Vec<f64>> = Vec::with_capacity(pts.len());
            for i in 0..pts.len() {
                active.push(pts[i][..last].to_vec());
                let lower = if i + 1 < pts.len() {
                    pts[i + 1][last]
                } else {
                    reference[last]
                };
                let height = pts[i][last] - lower;
                if height > 0.0 {
                    let slice = nondominated_filter(&active);
                    volume += sweep(slice, &reference[..last]) * height;
                }
            }
            volume
        }
    }
}

/// Uniform sampling of the box spanned by the reference and the component-wise
/// maximum of the points. Chunks draw from indexed child streams of `rng`.
pub fn hypervolume_monte_carlo(
    points: &[Vec<f64>],
    reference: &[f64],
    samples: usize,
    rng: &Rng,
) -> Hypervolume {
    let pts = nondominated_filter(&clip_to_reference(points, reference));
    if pts.is_empty() || samples == 0 {
        return Hypervolume {
            value: 0.0,
            std_error: Some(0.0),
        };
    }
    let m = reference.len();
    let upper: Vec<f64> = (0..m)
        .map(|j| pts.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let box_volume: f64 = upper.iter().zip(reference).map(|(u, r)| u - r).product();
    if box_volume <= 0.0 {
        return Hypervolume {
            value: 0.0,
            std_error: Some(0.0),
        };
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut local = rng.derive(c as u64);
            let n = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut sample = vec![0.0; m];
            let mut count = 0usize;
            for _ in 0..n {
                for j in 0..m {
                    sample[j] = local.uniform_range(reference[j], upper[j]);
                }
                if pts.iter().any(|p| p.iter().zip(&sample).all(|(a, b)| a >= b)) {
                    count += 1;
                }
            }
            count
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let frac = hits as f64 / samples as f64;
    Hypervolume {
        value: box_volume * frac,
        std_error: Some(box_volume * (frac * (1.0 - frac) / samples as f64).sqrt()),
    }
}

/// Mean over objectives of the mean squared gap between consecutive sorted
/// values. Lower means denser coverage.
pub fn sparsity(points: &[Vec<f64>]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "sparsity needs at least 2 points, got {}",
            points.len()
        )));
    }
    let m = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != m) {
        return Err(Error::shape("sparsity point", m, bad.len()));
    }
    let mut total = 0.0;
    for j in 0..m {
        let mut column: Vec<f64> = points.iter().map(|p| p[j]).collect();
        column.sort_by(f64::total_cmp);
        let gaps: f64 = column.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        total += gaps / (column.len() - 1) as f64;
    }
    Ok(total / m as f64)
}
