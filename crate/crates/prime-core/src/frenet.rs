//! Frenet frame on a reference path: bidirectional conversion between
//! Cartesian and curvilinear (s, d) states with full derivatives.

use crate::error::{Error, Result};
use crate::path_search::ReferencePath;
use crate::scene::{wrap_angle, AgentState, Point};

/// Frame built on a reference path: per-point unit tangent, unit normal
/// (tangent rotated +90 degrees) and signed reference curvature. Between
/// the points the reference line is a C1 cubic Hermite curve, so sampled
/// tangents are exact derivatives of sampled positions.
#[derive(Debug, Clone)]
pub struct FrenetFrame {
    pub path: ReferencePath,
    pub tangents: Vec<Point>,
    pub normals: Vec<Point>,
    /// Signed curvature of the reference line per point [1/m].
    pub curvature: Vec<f64>,
}

/// Curvilinear state [s, s', s'', d, d', d''].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetState {
    pub s: f64,
    pub s_dot: f64,
    pub s_ddot: f64,
    pub d: f64,
    pub d_dot: f64,
    pub d_ddot: f64,
}

/// Full Cartesian state produced by the Frenet-Cartesian transformation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianState {
    pub position: Point,
    pub heading: f64,
    pub speed: f64,
    pub acceleration: f64,
    pub curvature: f64,
}

/// Reference-line sample at a given arc length.
#[derive(Debug, Clone, Copy)]
pub struct FrameSample {
    pub position: Point,
    pub tangent: Point,
    pub normal: Point,
    pub heading: f64,
    pub kappa: f64,
    pub dkappa: f64,
}

/// Builds the frame. Tangents are arc-length-normalized central
/// differences (one-sided at the ends); curvature comes from heading
/// differences over arc length.
pub fn build_frame(path: ReferencePath) -> Result<FrenetFrame> {
    let pts = &path.points;
    let n = pts.len();
    for (i, w) in pts.windows(2).enumerate() {
        if w[0].dist(w[1]) < 1e-9 {
            return Err(Error::DegeneratePath(i));
        }
    }
    let mut tangents = Vec::with_capacity(n);
    for i in 0..n {
        let raw = if i == 0 {
            pts[1].sub(pts[0])
        } else if i == n - 1 {
            pts[n - 1].sub(pts[n - 2])
        } else {
            pts[i + 1].sub(pts[i - 1])
        };
        let len = raw.norm();
        tangents.push(raw.scale(1.0 / len));
    }
    // unwrapped headings for the per-point curvature estimate
    let mut headings = Vec::with_capacity(n);
    let mut prev = tangents[0].y.atan2(tangents[0].x);
    headings.push(prev);
    for t in tangents.iter().skip(1) {
        let h = prev + wrap_angle(t.y.atan2(t.x) - prev);
        headings.push(h);
        prev = h;
    }
    let s = &path.cum_arclength;
    let mut curvature = Vec::with_capacity(n);
    for i in 0..n {
        let k = if n < 3 {
            0.0
        } else if i == 0 {
            (headings[1] - headings[0]) / (s[1] - s[0])
        } else if i == n - 1 {
            (headings[n - 1] - headings[n - 2]) / (s[n - 1] - s[n - 2])
        } else {
            (headings[i + 1] - headings[i - 1]) / (s[i + 1] - s[i - 1])
        };
        curvature.push(k);
    }
    let normals = tangents.iter().map(|t| t.left_normal()).collect();
    Ok(FrenetFrame {
        path,
        tangents,
        normals,
        curvature,
    })
}

impl FrenetFrame {
    pub fn length(&self) -> f64 {
        self.path.length()
    }

    /// Samples the reference line at arc length `s`. Beyond either end the
    /// line extends straight along the end tangent with zero curvature.
    /// Inside, the point sits on the C1 cubic Hermite curve through the
    /// path points with chord-scaled tangents; heading, curvature and its
    /// derivative are the exact analytic derivatives of that curve, so the
    /// Frenet relations are self-consistent between samples.
    pub fn sample(&self, s: f64) -> FrameSample {
        let cum = &self.path.cum_arclength;
        let n = cum.len();
        if s <= 0.0 {
            let t = self.tangents[0];
            return FrameSample {
                position: self.path.points[0].add(t.scale(s)),
                tangent: t,
                normal: self.normals[0],
                heading: t.y.atan2(t.x),
                kappa: if s == 0.0 { self.curvature[0] } else { 0.0 },
                dkappa: 0.0,
            };
        }
        if s >= cum[n - 1] {
            let t = self.tangents[n - 1];
            let over = s - cum[n - 1];
            return FrameSample {
                position: self.path.points[n - 1].add(t.scale(over)),
                tangent: t,
                normal: t.left_normal(),
                heading: t.y.atan2(t.x),
                kappa: if over == 0.0 { self.curvature[n - 1] } else { 0.0 },
                dkappa: 0.0,
            };
        }
        let i = match cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        let chord = cum[i + 1] - cum[i];
        let u = (s - cum[i]) / chord;
        let p0 = self.path.points[i];
        let p1 = self.path.points[i + 1];
        let m0 = self.tangents[i].scale(chord);
        let m1 = self.tangents[i + 1].scale(chord);
        // Hermite basis and its u-derivatives
        let (u2, u3) = (u * u, u * u * u);
        let h = [
            2.0 * u3 - 3.0 * u2 + 1.0,
            u3 - 2.0 * u2 + u,
            -2.0 * u3 + 3.0 * u2,
            u3 - u2,
        ];
        let dh = [
            6.0 * u2 - 6.0 * u,
            3.0 * u2 - 4.0 * u + 1.0,
            -6.0 * u2 + 6.0 * u,
            3.0 * u2 - 2.0 * u,
        ];
        let ddh = [12.0 * u - 6.0, 6.0 * u - 4.0, -12.0 * u + 6.0, 6.0 * u - 2.0];
        let dddh = [12.0, 6.0, -12.0, 6.0];
        let combine = |c: [f64; 4]| {
            p0.scale(c[0])
                .add(m0.scale(c[1]))
                .add(p1.scale(c[2]))
                .add(m1.scale(c[3]))
        };
        let position = combine(h);
        let d1 = combine(dh); // dP/du
        let d2 = combine(ddh);
        let d3 = combine(dddh);
        let q = d1.norm();
        let tangent = d1.scale(1.0 / q);
        let cr = d1.cross(d2);
        let kappa = cr / (q * q * q);
        // d(kappa)/du, then chain rule down to arc length via |dP/du|
        let dq = d1.dot(d2) / q;
        let dkappa_du = (d1.cross(d3) - 3.0 * cr * dq / q) / (q * q * q);
        FrameSample {
            position,
            tangent,
            normal: tangent.left_normal(),
            heading: tangent.y.atan2(tangent.x),
            kappa,
            dkappa: dkappa_du / q,
        }
    }

    /// Closest-point arc length on the raw polyline; ties break toward
    /// smaller s.
    fn coarse_project(&self, p: Point) -> f64 {
        let pts = &self.path.points;
        let cum = &self.path.cum_arclength;
        let mut best_d = f64::INFINITY;
        let mut best_s = 0.0;
        for i in 0..pts.len() - 1 {
            let seg = pts[i + 1].sub(pts[i]);
            let len = cum[i + 1] - cum[i];
            let t = (p.sub(pts[i]).dot(seg) / seg.dot(seg)).clamp(0.0, 1.0);
            let closest = pts[i].add(seg.scale(t));
            let d = p.dist(closest);
            if d < best_d - 1e-12 {
                best_d = d;
                best_s = cum[i] + t * len;
            }
        }
        best_s
    }

    /// Projects a point onto the frame, refining the closest-point guess so
    /// that the residual along the interpolated tangent vanishes. Returns
    /// (s, d) with d positive to the left of the travel direction.
    pub fn project_point(&self, p: Point) -> (f64, f64) {
        let residual = |s: f64| {
            let f = self.sample(s);
            p.sub(f.position).dot(f.tangent)
        };
        let s0 = self.coarse_project(p);
        let mut lo = s0 - 1.5 * self.spacing();
        let mut hi = s0 + 1.5 * self.spacing();
        // residual is decreasing in s where the projection is regular;
        // widen until it brackets zero
        let mut tries = 0;
        while residual(lo) < 0.0 && tries < 8 {
            lo -= self.spacing() * 2.0_f64.powi(tries);
            tries += 1;
        }
        tries = 0;
        while residual(hi) > 0.0 && tries < 8 {
            hi += self.spacing() * 2.0_f64.powi(tries);
            tries += 1;
        }
        let mut s = s0;
        if residual(lo) >= 0.0 && residual(hi) <= 0.0 {
            for _ in 0..60 {
                s = 0.5 * (lo + hi);
                if residual(s) > 0.0 {
                    lo = s;
                } else {
                    hi = s;
                }
            }
            s = 0.5 * (lo + hi);
        }
        let f = self.sample(s);
        let d = p.sub(f.position).dot(f.normal);
        (s, d)
    }

    fn spacing(&self) -> f64 {
        let cum = &self.path.cum_arclength;
        (cum[cum.len() - 1] - cum[0]) / (cum.len() - 1) as f64
    }
}

/// Projects a full agent state onto the frame. High-order terms s'' and
/// d'' are set to zero.
pub fn project(frame: &FrenetFrame, state: &AgentState, lane_width: f64) -> Result<FrenetState> {
    let (s, d) = frame.project_point(state.position);
    let limit = 2.0 * lane_width;
    if d.abs() > limit {
        return Err(Error::OutOfCorridor {
            distance: d.abs(),
            limit,
        });
    }
    let f = frame.sample(s);
    let c = 1.0 - f.kappa * d;
    if c <= 0.0 {
        return Err(Error::SingularProjection(c));
    }
    let dtheta = wrap_angle(state.heading - f.heading);
    Ok(FrenetState {
        s,
        s_dot: state.speed * dtheta.cos() / c,
        s_ddot: 0.0,
        d,
        d_dot: state.speed * dtheta.sin(),
        d_ddot: 0.0,
    })
}

/// Frenet-to-Cartesian conversion with full derivatives, in vector form:
///   x  = r(s) + d n(s)
///   x' = s'(1 - k d) t + d' n
///   x'' = [s''(1 - k d) - k' s'^2 d - 2 k s' d'] t + [k s'^2 (1 - k d) + d''] n
/// speed, heading, tangential acceleration and curvature follow from the
/// velocity and acceleration vectors.
pub fn to_cartesian(frame: &FrenetFrame, fs: &FrenetState) -> Result<CartesianState> {
    let f = frame.sample(fs.s);
    let c = 1.0 - f.kappa * fs.d;
    if c <= 0.0 {
        return Err(Error::SingularProjection(c));
    }
    let position = f.position.add(f.normal.scale(fs.d));
    let xdot = f
        .tangent
        .scale(fs.s_dot * c)
        .add(f.normal.scale(fs.d_dot));
    let tang_acc =
        fs.s_ddot * c - f.dkappa * fs.s_dot * fs.s_dot * fs.d - 2.0 * f.kappa * fs.s_dot * fs.d_dot;
    let norm_acc = f.kappa * fs.s_dot * fs.s_dot * c + fs.d_ddot;
    let xddot = f.tangent.scale(tang_acc).add(f.normal.scale(norm_acc));
    let v = xdot.norm();
    let (heading, acceleration, curvature) = if v > 1e-9 {
        (
            xdot.y.atan2(xdot.x),
            xdot.dot(xddot) / v,
            xdot.cross(xddot) / (v * v * v),
        )
    } else {
        // at rest: heading along the reference, acceleration along the
        // tangent, curvature undefined and reported as zero
        (wrap_angle(f.heading), xddot.dot(f.tangent), 0.0)
    };
    Ok(CartesianState {
        position,
        heading: wrap_angle(heading),
        speed: v,
        acceleration,
        curvature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_search::{resample_polyline, ReferencePath};
    use crate::scene::ActorType;
    use std::f64::consts::PI;

    pub fn path_from_points(pts: Vec<Point>) -> ReferencePath {
        let mut cum = vec![0.0];
        for w in pts.windows(2) {
            cum.push(cum.last().unwrap() + w[0].dist(w[1]));
        }
        ReferencePath {
            segment_ids: vec!["p".into()],
            points: pts,
            cum_arclength: cum,
        }
    }

    pub fn straight_path(len: f64, spacing: f64) -> ReferencePath {
        let raw = vec![Point::new(0.0, 0.0), Point::new(len, 0.0)];
        path_from_points(resample_polyline(&raw, spacing))
    }

    pub fn arc_path(radius: f64, sweep: f64, n: usize) -> ReferencePath {
        // counter-clockwise arc starting at the origin heading +x
        let pts = (0..=n)
            .map(|i| {
                let a = sweep * i as f64 / n as f64;
                Point::new(radius * a.sin(), radius * (1.0 - a.cos()))
            })
            .collect();
        path_from_points(pts)
    }

    fn state(x: f64, y: f64, heading: f64, speed: f64) -> AgentState {
        AgentState {
            position: Point::new(x, y),
            heading,
            speed,
            turn_rate: 0.0,
            actor_type: ActorType::Vehicle,
            timestamp: 0.0,
        }
    }

    #[test]
    fn straight_frame_basis() {
        let frame = build_frame(straight_path(50.0, 2.0)).unwrap();
        for (t, (n, k)) in frame
            .tangents
            .iter()
            .zip(frame.normals.iter().zip(&frame.curvature))
        {
            assert!((t.x - 1.0).abs() < 1e-12 && t.y.abs() < 1e-12);
            assert!((n.y - 1.0).abs() < 1e-12 && n.x.abs() < 1e-12);
            assert!(k.abs() < 1e-12);
        }
    }

    #[test]
    fn frame_orthonormal() {
        let frame = build_frame(arc_path(10.0, PI / 2.0, 16)).unwrap();
        for (t, n) in frame.tangents.iter().zip(&frame.normals) {
            assert!((t.norm() - 1.0).abs() < 1e-9);
            assert!((n.norm() - 1.0).abs() < 1e-9);
            assert!(t.dot(*n).abs() < 1e-9);
        }
    }

    #[test]
    fn quarter_circle_curvature() {
        let frame = build_frame(arc_path(10.0, PI / 2.0, 16)).unwrap();
        // skip two points at each end: the one-sided end tangents bias the
        // central differences of their neighbors
        for k in &frame.curvature[2..frame.curvature.len() - 2] {
            assert!((k - 0.1).abs() < 0.1 * 0.05, "kappa {k}");
        }
    }

    #[test]
    fn two_point_path_one_sided_tangent() {
        let frame = build_frame(path_from_points(vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 4.0),
        ]))
        .unwrap();
        assert!((frame.tangents[0].x - 0.6).abs() < 1e-12);
        assert!((frame.tangents[0].y - 0.8).abs() < 1e-12);
    }

    #[test]
    fn degenerate_path_rejected() {
        let path = ReferencePath {
            segment_ids: vec!["p".into()],
            points: vec![Point::new(0.0, 0.0), Point::new(0.0, 0.0), Point::new(1.0, 0.0)],
            cum_arclength: vec![0.0, 0.0, 1.0],
        };
        assert!(matches!(build_frame(path), Err(Error::DegeneratePath(0))));
    }

    #[test]
    fn project_straight_longitudinal() {
        let frame = build_frame(straight_path(50.0, 2.0)).unwrap();
        let fs = project(&frame, &state(5.0, 2.0, 0.0, 10.0), 5.0).unwrap();
        assert!((fs.s - 5.0).abs() < 1e-9);
        assert!((fs.d - 2.0).abs() < 1e-9);
        assert!((fs.s_dot - 10.0).abs() < 1e-9);
        assert!(fs.d_dot.abs() < 1e-9);
    }

    #[test]
    fn project_straight_lateral() {
        let frame = build_frame(straight_path(50.0, 2.0)).unwrap();
        let fs = project(&frame, &state(5.0, 2.0, PI / 2.0, 10.0), 5.0).unwrap();
        assert!(fs.s_dot.abs() < 1e-9);
        assert!((fs.d_dot - 10.0).abs() < 1e-9);
    }

    #[test]
    fn project_out_of_corridor() {
        let frame = build_frame(straight_path(50.0, 2.0)).unwrap();
        assert!(matches!(
            project(&frame, &state(5.0, 11.0, 0.0, 10.0), 5.0),
            Err(Error::OutOfCorridor { .. })
        ));
    }

    #[test]
    fn project_matches_dense_search_on_arc() {
        // brute-force projection oracle at 1 mm sampling
        let frame = build_frame(arc_path(20.0, PI / 2.0, 24)).unwrap();
        let p = Point::new(8.0, 3.0);
        let (s, d) = frame.project_point(p);
        let mut best = (f64::INFINITY, 0.0);
        let mut u = 0.0;
        while u <= frame.length() {
            let dist = frame.sample(u).position.dist(p);
            if dist < best.0 {
                best = (dist, u);
            }
            u += 0.001;
        }
        assert!((s - best.1).abs() < 1e-3, "s {s} vs dense {}", best.1);
        assert!((d.abs() - best.0).abs() < 1e-3);
    }

    #[test]
    fn to_cartesian_straight() {
        let frame = build_frame(straight_path(50.0, 2.0)).unwrap();
        let out = to_cartesian(
            &frame,
            &FrenetState {
                s: 5.0,
                s_dot: 10.0,
                s_ddot: 0.0,
                d: 2.0,
                d_dot: 0.0,
                d_ddot: 0.0,
            },
        )
        .unwrap();
        assert!((out.position.x - 5.0).abs() < 1e-12);
        assert!((out.position.y - 2.0).abs() < 1e-12);
        assert!((out.speed - 10.0).abs() < 1e-12);
        assert!(out.curvature.abs() < 1e-12);
        assert!(out.acceleration.abs() < 1e-12);
    }

    #[test]
    fn to_cartesian_diagonal_speed() {
        let frame = build_frame(straight_path(50.0, 2.0)).unwrap();
        let out = to_cartesian(
            &frame,
            &FrenetState {
                s: 5.0,
                s_dot: 10.0,
                s_ddot: 0.0,
                d: 0.0,
                d_dot: 10.0,
                d_ddot: 0.0,
            },
        )
        .unwrap();
        assert!((out.speed - 200.0_f64.sqrt()).abs() < 1e-12);
        assert!((out.heading - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences_on_arc() {
        // drive along a circular path with a smooth frenet trajectory and
        // compare analytic v, alpha, kappa against central differences of
        // the positional output
        let frame = build_frame(arc_path(30.0, PI / 2.0, 24)).unwrap();
        let s_of = |t: f64| 2.0 + 15.0 * t + 0.5 * t * t;
        let sd_of = |t: f64| 15.0 + t;
        let d_of = |t: f64| 1.0 + 0.5 * t;
        let state_at = |t: f64| FrenetState {
            s: s_of(t),
            s_dot: sd_of(t),
            s_ddot: 1.0,
            d: d_of(t),
            d_dot: 0.5,
            d_ddot: 0.0,
        };
        let h = 0.1;
        for k in 2..12 {
            let t = 0.1 * k as f64;
            let prev = to_cartesian(&frame, &state_at(t - h)).unwrap().position;
            let cur = to_cartesian(&frame, &state_at(t)).unwrap();
            let next = to_cartesian(&frame, &state_at(t + h)).unwrap().position;
            let vel = next.sub(prev).scale(1.0 / (2.0 * h));
            let acc = next.add(prev).sub(cur.position.scale(2.0)).scale(1.0 / (h * h));
            let v_fd = vel.norm();
            let kappa_fd = vel.cross(acc) / (v_fd * v_fd * v_fd);
            let a_fd = vel.dot(acc) / v_fd;
            assert!((cur.speed - v_fd).abs() / v_fd < 0.01, "v {} vs {}", cur.speed, v_fd);
            assert!(
                (cur.curvature - kappa_fd).abs() < 0.01 * kappa_fd.abs().max(0.05),
                "kappa {} vs {}",
                cur.curvature,
                kappa_fd
            );
            assert!((cur.acceleration - a_fd).abs() < 0.05, "a {} vs {}", cur.acceleration, a_fd);
        }
    }

    #[test]
    fn round_trip_straight() {
        let frame = build_frame(straight_path(100.0, 2.0)).unwrap();
        let st = state(37.3, -1.7, 0.3, 8.0);
        let fs = project(&frame, &st, 5.0).unwrap();
        let back = to_cartesian(&frame, &fs).unwrap();
        assert!(back.position.dist(st.position) < 1e-6);
        assert!((back.speed - st.speed).abs() < 1e-6);
        assert!((back.heading - st.heading).abs() < 1e-6);
    }

    #[test]
    fn round_trip_curved() {
        let frame = build_frame(arc_path(25.0, PI / 2.0, 20)).unwrap();
        let st = state(10.0, 3.5, 0.8, 6.0);
        let fs = project(&frame, &st, 5.0).unwrap();
        let back = to_cartesian(&frame, &fs).unwrap();
        assert!(back.position.dist(st.position) < 1e-3, "err {}", back.position.dist(st.position));
    }

    #[test]
    fn monotone_s_for_forward_motion() {
        let frame = build_frame(arc_path(30.0, PI / 2.0, 24)).unwrap();
        let mut last = -1.0;
        for k in 0..20 {
            let fs = FrenetState {
                s: 1.0 + 2.0 * k as f64,
                s_dot: 5.0,
                s_ddot: 0.0,
                d: 0.5,
                d_dot: 0.0,
                d_ddot: 0.0,
            };
            let out = to_cartesian(&frame, &fs).unwrap();
            let (s, _) = frame.project_point(out.position);
            assert!(s > last);
            last = s;
        }
    }

    #[test]
    fn position_identity_residual_by_construction() {
        let frame = build_frame(arc_path(15.0, PI / 2.0, 20)).unwrap();
        let fs = FrenetState {
            s: 7.0,
            s_dot: 5.0,
            s_ddot: 0.3,
            d: -1.2,
            d_dot: 0.4,
            d_ddot: 0.1,
        };
        let out = to_cartesian(&frame, &fs).unwrap();
        let f = frame.sample(fs.s);
        let residual = out.position.sub(f.position).sub(f.normal.scale(fs.d)).norm();
        assert!(residual < 1e-9);
    }
}
