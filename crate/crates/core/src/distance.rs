//! Trajectory distance: DTW over geometry plus peak speed difference.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Point;
use crate::planner::{ensure_nonempty, Plan};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceWeights {
    pub geometry: f64,
    pub speed: f64,
}

impl Default for DistanceWeights {
    fn default() -> Self {
        Self {
            geometry: 3.0,
            speed: 1.0 / 3.0,
        }
    }
}

/// Classic dynamic time warping with Euclidean point cost.
pub fn dtw(a: &[Point], b: &[Point]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { f64::INFINITY };
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for pa in a {
        cur[0] = f64::INFINITY;
        for (j, pb) in b.iter().enumerate() {
            let best = prev[j].min(prev[j + 1]).min(cur[j]);
            cur[j + 1] = pa.distance(*pb) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

fn arc_lengths(points: &[Point]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(points.len());
    out.push(0.0);
    for w in points.windows(2) {
        acc += w[0].distance(w[1]);
        out.push(acc);
    }
    out
}

/// `n` points spaced uniformly in arc length over `[0, length]`.
pub fn resample(points: &[Point], length: f64, n: usize) -> Vec<Point> {
    let cum = arc_lengths(points);
    let mut seg = 0;
    (0..n)
        .map(|k| {
            let target = if n > 1 { length * k as f64 / (n - 1) as f64 } else { 0.0 };
            while seg + 2 < points.len() && cum[seg + 1] < target {
                seg += 1;
            }
            if points.len() == 1 {
                return points[0];
            }
            let span = cum[seg + 1] - cum[seg];
            let u = if span > 0.0 { ((target - cum[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
            points[seg].lerp(points[seg + 1], u)
        })
        .collect()
}

fn speed_at(plan: &Plan, t: f64) -> f64 {
    let pts = &plan.points;
    let idx = pts.partition_point(|p| p.time_s < t);
    if idx == 0 {
        return pts[0].speed_mps;
    }
    if idx >= pts.len() {
        return pts[pts.len() - 1].speed_mps;
    }
    let (a, b) = (pts[idx - 1], pts[idx]);
    let u = (t - a.time_s) / (b.time_s - a.time_s);
    a.speed_mps + (b.speed_mps - a.speed_mps) * u
}

/// Unweighted (geometry, speed) terms.
///
/// Geometry compares both paths resampled over their common arc length, so a
/// change of speed alone along the same path contributes nothing to it. DTW
/// cost is normalized by the number of resampled points.
pub fn plan_distance_terms(a: &Plan, b: &Plan) -> Result<(f64, f64)> {
    ensure_nonempty(a)?;
    ensure_nonempty(b)?;
    let pa: Vec<Point> = a.points.iter().map(|p| Point::new(p.x_m, p.y_m)).collect();
    let pb: Vec<Point> = b.points.iter().map(|p| Point::new(p.x_m, p.y_m)).collect();
    let common = arc_lengths(&pa).last().copied().unwrap_or(0.0).min(arc_lengths(&pb).last().copied().unwrap_or(0.0));
    let n = pa.len().max(pb.len());
    let geometry = dtw(&resample(&pa, common, n), &resample(&pb, common, n)) / n as f64;

    let lo = a.points[0].time_s.max(b.points[0].time_s);
    let hi = a.points[a.points.len() - 1].time_s.min(b.points[b.points.len() - 1].time_s);
    let speed = a
        .points
        .iter()
        .chain(&b.points)
        .map(|p| p.time_s)
        .filter(|t| *t >= lo && *t <= hi)
        .map(|t| (speed_at(a, t) - speed_at(b, t)).abs())
        .fold(0.0, f64::max);
    Ok((geometry, speed))
}

pub fn plan_distance(a: &Plan, b: &Plan, weights: DistanceWeights) -> Result<f64> {
    let (g, s) = plan_distance_terms(a, b)?;
    Ok(weights.geometry * g + weights.speed * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::planner::PlanPoint;

    fn line(offset: f64, speed: f64, n: usize) -> Plan {
        Plan::from_points(
            (0..n)
                .map(|k| {
                    let t = 0.1 * k as f64;
                    PlanPoint {
                        time_s: t,
                        x_m: speed * t,
                        y_m: offset,
                        speed_mps: speed,
                        accel_mps2: 0.0,
                    }
                })
                .collect(),
        )
    }

    /// Exhaustive minimum over all monotone warping paths.
    fn brute_dtw(a: &[Point], b: &[Point], i: usize, j: usize) -> f64 {
        let here = a[i].distance(b[j]);
        if i == 0 && j == 0 {
            return here;
        }
        let mut best = f64::INFINITY;
        if i > 0 {
            best = best.min(brute_dtw(a, b, i - 1, j));
        }
        if j > 0 {
            best = best.min(brute_dtw(a, b, i, j - 1));
        }
        if i > 0 && j > 0 {
            best = best.min(brute_dtw(a, b, i - 1, j - 1));
        }
        here + best
    }

    #[test]
    fn dtw_matches_exhaustive_search() {
        let a: Vec<Point> = [(0.0, 0.0), (1.0, 0.5), (2.0, 0.1), (3.5, 1.0), (4.0, 0.0)]
            .iter()
            .map(|&(x, y)| Point::new(x, y))
            .collect();
        let b: Vec<Point> = [(0.0, 0.2), (0.5, 0.0), (2.2, 0.7), (4.1, 0.2)]
            .iter()
            .map(|&(x, y)| Point::new(x, y))
            .collect();
        let expected = brute_dtw(&a, &b, a.len() - 1, b.len() - 1);
        assert!((dtw(&a, &b) - expected).abs() < 1e-12);
        assert!((dtw(&b, &a) - expected).abs() < 1e-12);
    }

    #[test]
    fn identity_is_zero() {
        let p = line(0.0, 10.0, 31);
        assert_eq!(plan_distance(&p, &p, DistanceWeights::default()).unwrap(), 0.0);
    }

    #[test]
    fn uniform_speed_drop_is_pure_speed_term() {
        let (g, s) = plan_distance_terms(&line(0.0, 10.0, 31), &line(0.0, 8.0, 31)).unwrap();
        assert!(g.abs() < 1e-12);
        assert!((s - 2.0).abs() < 1e-12);
        let w = DistanceWeights { geometry: 1.0, speed: 0.5 };
        let d = plan_distance(&line(0.0, 10.0, 31), &line(0.0, 8.0, 31), w).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lateral_offset_toy() {
        // 5-point straight line vs the same line shifted 1 m: every point
        // matches its counterpart at cost 1, so DTW = 5 and the normalized
        // geometry term is 1 * geometry weight.
        let a = line(0.0, 10.0, 5);
        let b = line(1.0, 10.0, 5);
        let pa: Vec<Point> = a.points.iter().map(|p| Point::new(p.x_m, p.y_m)).collect();
        let pb: Vec<Point> = b.points.iter().map(|p| Point::new(p.x_m, p.y_m)).collect();
        assert!((brute_dtw(&pa, &pb, 4, 4) - 5.0).abs() < 1e-12);
        let w = DistanceWeights { geometry: 2.5, speed: 1.0 };
        let d = plan_distance(&a, &b, w).unwrap();
        assert!((d - 5.0 * 1.0 * 2.5 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn empty_plan_rejected() {
        let empty = Plan::from_points(Vec::new());
        assert!(matches!(plan_distance(&empty, &line(0.0, 1.0, 3), DistanceWeights::default()), Err(Error::Argument(_))));
    }
}
