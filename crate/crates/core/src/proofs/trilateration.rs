//! Least-squares position fixes from ranged anchors.
//!
//! Solving happens on the local tangent plane about the anchor centroid
//! with Gauss-Newton iteration (at most 50 steps, step tolerance 1e-4 m).
//! Collinear anchor layouts are rejected up front: with all anchors on a
//! line the fix is mirror-ambiguous, so the solver refuses rather than
//! returning either reflection.

use crate::geo::{from_tangent_plane, haversine_distance, tangent_plane, GeoPoint};

pub const MAX_ITERATIONS: usize = 50;
pub const STEP_TOLERANCE_M: f64 = 1e-4;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrilaterationError {
    #[error("need at least 3 ranged anchors, got {0}")]
    TooFewAnchors(usize),
    #[error("anchor geometry is degenerate (collinear)")]
    DegenerateGeometry,
    #[error("no convergence after {MAX_ITERATIONS} iterations")]
    NoConvergence,
}

/// A solved position with its root-mean-square range misfit.
#[derive(Debug, Clone, Copy)]
pub struct Fix {
    pub position: GeoPoint,
    pub residual_m: f64,
}

/// Root-mean-square great-circle range misfit of `position`.
fn rms_misfit(position: GeoPoint, anchors: &[(GeoPoint, f64)]) -> f64 {
    let sum: f64 = anchors
        .iter()
        .map(|&(a, d)| (haversine_distance(position, a) - d).powi(2))
        .sum();
    (sum / anchors.len() as f64).sqrt()
}

/// Least-squares fix from `(anchor position, measured distance)` pairs.
pub fn trilaterate(anchors: &[(GeoPoint, f64)]) -> Result<Fix, TrilaterationError> {
    if anchors.len() < 3 {
        return Err(TrilaterationError::TooFewAnchors(anchors.len()));
    }

    // Tangent plane about the anchor centroid.
    let centroid_lat = anchors.iter().map(|(p, _)| p.lat).sum::<f64>() / anchors.len() as f64;
    let centroid_lon = anchors.iter().map(|(p, _)| p.lon).sum::<f64>() / anchors.len() as f64;
    let origin = GeoPoint {
        lat: centroid_lat,
        lon: centroid_lon,
    };
    let anchors_xy: Vec<(f64, f64, f64)> = anchors
        .iter()
        .map(|&(p, d)| {
            let (x, y) = tangent_plane(origin, p);
            (x, y, d)
        })
        .collect();

    // Scatter-matrix degeneracy test: the smallest eigenvalue vanishes
    // exactly when the anchors are collinear.
    let n = anchors_xy.len() as f64;
    let mx = anchors_xy.iter().map(|a| a.0).sum::<f64>() / n;
    let my = anchors_xy.iter().map(|a| a.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y, _) in &anchors_xy {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let trace = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (trace * trace / 4.0 - det).max(0.0).sqrt();
    let eig_min = trace / 2.0 - disc;
    let eig_max = trace / 2.0 + disc;
    if eig_min <= 1e-9 * eig_max.max(1.0) {
        return Err(TrilaterationError::DegenerateGeometry);
    }

    // Gauss-Newton from the centroid. Residuals use great-circle ranges
    // so the tangent-plane distortion never leaks into the misfit; the
    // Jacobian direction comes from the planar geometry.
    let (mut px, mut py) = (0.0f64, 0.0f64);
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let here = from_tangent_plane(origin, px, py);
        let (mut jtj00, mut jtj01, mut jtj11) = (0.0f64, 0.0f64, 0.0f64);
        let (mut jtr0, mut jtr1) = (0.0f64, 0.0f64);
        for (&(ax, ay, _), &(apos, d)) in anchors_xy.iter().zip(anchors) {
            let dx = px - ax;
            let dy = py - ay;
            let dist = (dx * dx + dy * dy).sqrt().max(1e-9);
            let r = haversine_distance(here, apos) - d;
            let (jx, jy) = (dx / dist, dy / dist);
            jtj00 += jx * jx;
            jtj01 += jx * jy;
            jtj11 += jy * jy;
            jtr0 += jx * r;
            jtr1 += jy * r;
        }
        let det = jtj00 * jtj11 - jtj01 * jtj01;
        if det.abs() < 1e-12 {
            return Err(TrilaterationError::NoConvergence);
        }
        let step_x = -(jtj11 * jtr0 - jtj01 * jtr1) / det;
        let step_y = -(jtj00 * jtr1 - jtj01 * jtr0) / det;
        px += step_x;
        py += step_y;
        if (step_x * step_x + step_y * step_y).sqrt() < STEP_TOLERANCE_M {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(TrilaterationError::NoConvergence);
    }

    let position = from_tangent_plane(origin, px, py);
    Ok(Fix {
        position,
        residual_m: rms_misfit(position, anchors),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::haversine_distance;

    fn anchor(origin: GeoPoint, x: f64, y: f64) -> GeoPoint {
        from_tangent_plane(origin, x, y)
    }

    /// Independent oracle: grid search over the zone, 10 m lattice over
    /// +/-500 m then 1 m refinement around the coarse optimum.
    fn grid_search(anchors: &[(GeoPoint, f64)], origin: GeoPoint) -> (GeoPoint, f64) {
        let misfit = |x: f64, y: f64| -> f64 {
            let p = from_tangent_plane(origin, x, y);
            let sum: f64 = anchors
                .iter()
                .map(|&(a, d)| (haversine_distance(p, a) - d).powi(2))
                .sum();
            (sum / anchors.len() as f64).sqrt()
        };
        let mut best = (0.0f64, 0.0f64, f64::INFINITY);
        let mut x = -500.0;
        while x <= 500.0 {
            let mut y = -500.0;
            while y <= 500.0 {
                let m = misfit(x, y);
                if m < best.2 {
                    best = (x, y, m);
                }
                y += 10.0;
            }
            x += 10.0;
        }
        let (cx, cy, _) = best;
        let mut x = cx - 15.0;
        while x <= cx + 15.0 {
            let mut y = cy - 15.0;
            while y <= cy + 15.0 {
                let m = misfit(x, y);
                if m < best.2 {
                    best = (x, y, m);
                }
                y += 1.0;
            }
            x += 1.0;
        }
        (from_tangent_plane(origin, best.0, best.1), best.2)
    }

    #[test]
    fn recovers_known_point_with_exact_ranges() {
        let origin = GeoPoint {
            lat: 47.3769,
            lon: 8.5417,
        };
        let truth = anchor(origin, 23.0, -41.0);
        let beacons = [
            anchor(origin, -120.0, -80.0),
            anchor(origin, 130.0, -90.0),
            anchor(origin, 100.0, 140.0),
            anchor(origin, -90.0, 110.0),
        ];
        let anchors: Vec<(GeoPoint, f64)> = beacons
            .iter()
            .map(|&b| (b, haversine_distance(truth, b)))
            .collect();
        let fix = trilaterate(&anchors).unwrap();
        assert!(
            haversine_distance(fix.position, truth) < 0.5,
            "drift too large"
        );
        assert!(fix.residual_m < 1e-3, "residual {}", fix.residual_m);

        // Grid-search oracle lands on the same point (to its 1 m lattice).
        let (oracle_pos, _) = grid_search(&anchors, origin);
        assert!(haversine_distance(oracle_pos, truth) < 1.5);
        assert!(haversine_distance(oracle_pos, fix.position) < 2.0);
    }

    #[test]
    fn collinear_anchors_rejected() {
        let origin = GeoPoint {
            lat: 47.0,
            lon: 8.0,
        };
        let anchors: Vec<(GeoPoint, f64)> = [-100.0, 0.0, 100.0]
            .iter()
            .map(|&x| (anchor(origin, x, 0.0), 50.0))
            .collect();
        assert_eq!(
            trilaterate(&anchors).unwrap_err(),
            TrilaterationError::DegenerateGeometry
        );
    }

    #[test]
    fn too_few_anchors_rejected() {
        let origin = GeoPoint {
            lat: 47.0,
            lon: 8.0,
        };
        let anchors = vec![
            (anchor(origin, 0.0, 0.0), 10.0),
            (anchor(origin, 50.0, 0.0), 10.0),
        ];
        assert_eq!(
            trilaterate(&anchors).unwrap_err(),
            TrilaterationError::TooFewAnchors(2)
        );
    }

    #[test]
    fn corrupted_range_inflates_residual() {
        let origin = GeoPoint {
            lat: 47.3769,
            lon: 8.5417,
        };
        let truth = anchor(origin, 10.0, 5.0);
        let beacons = [
            anchor(origin, -120.0, -80.0),
            anchor(origin, 130.0, -90.0),
            anchor(origin, 100.0, 140.0),
            anchor(origin, -90.0, 110.0),
        ];
        let mut anchors: Vec<(GeoPoint, f64)> = beacons
            .iter()
            .map(|&b| (b, haversine_distance(truth, b)))
            .collect();
        anchors[2].1 += 300.0;
        let fix = trilaterate(&anchors).unwrap();
        assert!(fix.residual_m > 10.0, "residual {}", fix.residual_m);
    }
}
