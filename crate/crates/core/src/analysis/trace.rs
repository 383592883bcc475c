use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::whitening::{gram_map, DeviationNorm, GramTrace, TracePoint};

/// Iteration stops once the ℓ∞ deviation falls below this.
pub const TRACE_FLOOR: f64 = 1e-14;

/// Pairs whose left deviation lies outside `[lo, hi]` are ignored by [`fit_slope`].
pub const SLOPE_WINDOW: (f64, f64) = (1e-12, 1e-1);

/// Apply [`gram_map`] repeatedly from `g0`, recording `‖G_t − I‖` after each
/// pass. Pass 0 is `g0` itself.
pub fn trace_convergence(g0: &Matrix, max_passes: usize) -> Result<GramTrace> {
    let mut g = g0.clone();
    let mut trace = GramTrace {
        points: vec![TracePoint::of(0, &g)],
    };
    for pass in 1..=max_passes {
        if trace.points.last().is_none_or(|p| p.linf < TRACE_FLOOR) {
            break;
        }
        g = gram_map(&g)?;
        trace.points.push(TracePoint::of(pass, &g));
    }
    Ok(trace)
}

/// Consecutive pairs `(‖E_t‖, ‖E_{t+1}‖)` with `‖E_t‖` inside
/// [`SLOPE_WINDOW`] and `‖E_{t+1}‖ > 0`.
///
/// Only the left end is windowed: a trace starting near `1e-4` has just two
/// points above `1e-12`, and the pair leaving the window is still an exact
/// measurement of the map, not rounding noise.
pub fn slope_pairs(trace: &GramTrace, norm: DeviationNorm) -> Vec<(f64, f64)> {
    trace
        .series(norm)
        .windows(2)
        .filter(|w| w[0] >= SLOPE_WINDOW.0 && w[0] <= SLOPE_WINDOW.1 && w[1] > 0.0)
        .map(|w| (w[0], w[1]))
        .collect()
}

/// Convergence order `q` from a least-squares fit of
/// `log ‖E_{t+1}‖ = q · log ‖E_t‖ + log C` over [`slope_pairs`].
/// Needs at least two pairs.
pub fn fit_slope(trace: &GramTrace, norm: DeviationNorm) -> Option<f64> {
    let pairs = slope_pairs(trace, norm);
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Largest `‖E_{t+1}‖ / ‖E_t‖²` over the trace, skipping exact zeros.
pub fn quadratic_constant(trace: &GramTrace, norm: DeviationNorm) -> Result<f64> {
    let s = trace.series(norm);
    if s.is_empty() {
        return Err(Error::invalid("empty trace"));
    }
    Ok(s.windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / (w[0] * w[0]))
        .fold(0.0, f64::max))
}
