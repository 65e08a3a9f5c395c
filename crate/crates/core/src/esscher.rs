//! Conditional Esscher tilting of a finite increment cloud: strictly positive
//! weights with zero mean, bounded second moment and bounded off-zero mass.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{Cholesky, SymMatrix};

/// Relative size below which an inradius is treated as zero.
pub const INTERIOR_TOL: f64 = 1e-9;
pub const NEWTON_MAX_ITER: usize = 200;
const SPHERE_DIRECTIONS: usize = 4096;

/// Weighted sample of `d`-dimensional increments.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementCloud {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    zero_mass: f64,
}

impl IncrementCloud {
    /// `weights` must be positive; they are normalized to sum to one.
    pub fn new(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return domain("cloud dimension must be positive");
        }
        if points.is_empty() || points.len() != weights.len() {
            return domain(format!(
                "cloud needs matching non-empty points/weights ({} vs {})",
                points.len(),
                weights.len()
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return domain(format!("cloud weight {w} is not strictly positive"));
        }
        let total: f64 = weights.iter().sum();
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return domain(format!("point of length {} in a {dim}-dimensional cloud", p.len()));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return domain("cloud point is not finite");
            }
            flat.extend_from_slice(p);
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let zero_mass = points
            .iter()
            .zip(&weights)
            .filter(|(p, _)| p.iter().all(|x| *x == 0.0))
            .map(|(_, w)| w)
            .sum();
        Ok(Self {
            dim,
            points: flat,
            weights,
            zero_mass,
        })
    }

    pub fn uniform(dim: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::new(dim, points, w)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn zero_mass(&self) -> f64 {
        self.zero_mass
    }

    pub fn is_zero(&self, i: usize) -> bool {
        self.point(i).iter().all(|x| *x == 0.0)
    }

    /// Largest point norm; the yardstick for the degeneracy tolerance.
    pub fn scale(&self) -> f64 {
        (0..self.len()).map(|i| norm(self.point(i))).fold(0.0, f64::max)
    }

    /// The cloud with every point negated.
    pub fn negated(&self) -> Self {
        Self {
            points: self.points.iter().map(|x| -x).collect(),
            ..self.clone()
        }
    }

    fn nonzero_points(&self) -> Vec<&[f64]> {
        (0..self.len()).filter(|i| !self.is_zero(*i)).map(|i| self.point(i)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteriorCheck {
    pub ok: bool,
    /// Radius of the largest origin-centred ball inside the hull (0 if none).
    pub delta: f64,
    /// Whether `delta` is exact (hull facets) or a sampled-direction estimate.
    pub exact: bool,
}

/// Decides whether the origin is interior to the convex hull of the cloud.
///
/// Exact in one and two dimensions; in higher dimension the inradius is the
/// minimum of the support function over a fixed set of sphere directions,
/// which can only overestimate the true value.
pub fn check_interior(cloud: &IncrementCloud) -> InteriorCheck {
    let (delta, exact) = match cloud.dim {
        1 => {
            let (lo, hi) = (0..cloud.len())
                .map(|i| cloud.point(i)[0])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
            ((-lo).min(hi), true)
        }
        2 => (planar_inradius(cloud), true),
        _ => (sampled_inradius(cloud), false),
    };
    let delta = delta.max(0.0);
    let ok = delta > INTERIOR_TOL * cloud.scale().max(f64::MIN_POSITIVE);
    InteriorCheck {
        ok,
        delta: if ok { delta } else { 0.0 },
        exact,
    }
}

fn cross(o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise hull by monotone chain, collinear points dropped.
pub(crate) fn convex_hull_2d(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

fn planar_inradius(cloud: &IncrementCloud) -> f64 {
    let pts: Vec<[f64; 2]> = (0..cloud.len()).map(|i| [cloud.point(i)[0], cloud.point(i)[1]]).collect();
    let hull = convex_hull_2d(&pts);
    if hull.len() < 3 {
        return 0.0;
    }
    let o = [0.0, 0.0];
    (0..hull.len())
        .map(|i| {
            let a = &hull[i];
            let b = &hull[(i + 1) % hull.len()];
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            cross(a, b, &o) / len
        })
        .fold(f64::INFINITY, f64::min)
}

fn sampled_inradius(cloud: &IncrementCloud) -> f64 {
    let d = cloud.dim;
    // Fixed directions: coordinate axes plus a deterministic random sample.
    let mut rng = crate::rng::stream(0x5EED, crate::rng::AUX_STREAM_BASE);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(2 * d + SPHERE_DIRECTIONS);
    for j in 0..d {
        for s in [-1.0, 1.0] {
            let mut u = vec![0.0; d];
            u[j] = s;
            dirs.push(u);
        }
    }
    while dirs.len() < 2 * d + SPHERE_DIRECTIONS {
        let u: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let n = norm(&u);
        if n > 1e-12 {
            dirs.push(u.iter().map(|x| x / n).collect());
        }
    }
    let pts = cloud.nonzero_points();
    dirs.iter()
        .map(|u| pts.iter().map(|p| dot(u, p)).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

/// `φ(θ) = Σ w_i exp(θ·x_i)` with gradient and Hessian, evaluated with a
/// common exponent shift `m` (all three are scaled by `e^{-m}`).
struct Mgf {
    value: f64,
    grad: Vec<f64>,
    hess: SymMatrix,
    shift: f64,
}

fn exponents(cloud: &IncrementCloud, theta: &[f64]) -> Vec<f64> {
    (0..cloud.len()).map(|i| dot(theta, cloud.point(i))).collect()
}

fn mgf_value(cloud: &IncrementCloud, theta: &[f64]) -> (f64, f64) {
    let e = exponents(cloud, theta);
    let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v = e.iter().zip(&cloud.weights).map(|(e, w)| w * (e - m).exp()).sum();
    (v, m)
}

fn mgf(cloud: &IncrementCloud, theta: &[f64]) -> Mgf {
    let d = cloud.dim;
    let e = exponents(cloud, theta);
    let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut value = 0.0;
    let mut grad = vec![0.0; d];
    let mut h = vec![0.0; d * d];
    for (i, ei) in e.iter().enumerate() {
        let c = cloud.weights[i] * (ei - m).exp();
        let x = cloud.point(i);
        value += c;
        for a in 0..d {
            grad[a] += c * x[a];
            for b in 0..=a {
                h[a * d + b] += c * x[a] * x[b];
            }
        }
    }
    let hess = SymMatrix::from_fn(d, |a, b| if a >= b { h[a * d + b] } else { h[b * d + a] });
    Mgf {
        value,
        grad,
        hess,
        shift: m,
    }
}

fn tilted_mean_norm(cloud: &IncrementCloud, theta: &[f64]) -> f64 {
    let f = mgf(cloud, theta);
    norm(&f.grad.iter().map(|g| g / f.value).collect::<Vec<_>>())
}

/// `ln φ(θ)`, finite for every θ.
pub fn log_mgf(cloud: &IncrementCloud, theta: &[f64]) -> f64 {
    let (v, m) = mgf_value(cloud, theta);
    v.ln() + m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimizer {
    pub theta: Vec<f64>,
    pub iterations: usize,
    /// `|∇φ(θ*)| / φ(θ*)`, i.e. the norm of the tilted mean.
    pub grad_norm: f64,
}

/// Damped Newton on `ln φ` from θ = 0, stopping once the tilted mean has
/// norm at most `tol`.
pub fn esscher_minimize(cloud: &IncrementCloud, tol: f64) -> Result<Minimizer> {
    let check = check_interior(cloud);
    if !check.ok {
        return Err(Error::NoEsscherSolution { delta: check.delta });
    }
    let d = cloud.dim;
    let mut theta = vec![0.0; d];
    let mut grad_norm = f64::INFINITY;
    for it in 0..NEWTON_MAX_ITER {
        let f = mgf(cloud, &theta);
        let g: Vec<f64> = f.grad.iter().map(|g| g / f.value).collect();
        grad_norm = norm(&g);
        if grad_norm <= tol {
            return Ok(Minimizer {
                theta,
                iterations: it,
                grad_norm,
            });
        }
        // Newton direction for φ itself (the common scale cancels).
        let chol = Cholesky::new(&f.hess)?;
        let neg: Vec<f64> = f.grad.iter().map(|x| -x).collect();
        let step = chol.solve(&neg);
        let slope = dot(&f.grad, &step) / f.value;
        let base = f.value.ln() + f.shift;
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            // Near the optimum the decrease drowns in rounding; a step that
            // shrinks the tilted mean is then just as good.
            let accept = log_mgf(cloud, &trial) <= base + 1e-4 * t * slope
                || (t == 1.0 && tilted_mean_norm(cloud, &trial) < grad_norm)
                || t < 1e-12;
            if accept {
                theta = trial;
                break;
            }
            t *= 0.5;
        }
    }
    // Last look after the final update.
    let f = mgf(cloud, &theta);
    let g: Vec<f64> = f.grad.iter().map(|g| g / f.value).collect();
    let last = norm(&g);
    if last <= tol {
        return Ok(Minimizer {
            theta,
            iterations: NEWTON_MAX_ITER,
            grad_norm: last,
        });
    }
    Err(Error::NonConvergence {
        iterations: NEWTON_MAX_ITER,
        grad_norm: last.min(grad_norm),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsscherDiagnostics {
    pub iterations: usize,
    pub grad_norm: f64,
    pub lambda: f64,
    pub mu: f64,
    /// `Σ w z`.
    pub mass: f64,
    /// `Σ w z x`.
    pub mean: Vec<f64>,
    /// `Σ w z |x|²`.
    pub second_moment: f64,
    /// `Σ_{x≠0} w z`.
    pub off_zero_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsscherResult {
    pub theta_star: Vec<f64>,
    pub z_weights: Vec<f64>,
    pub eta: f64,
    pub diagnostics: EsscherDiagnostics,
}

impl EsscherResult {
    /// One JSON line for the diagnostics stream.
    pub fn diagnostics_line(&self) -> String {
        serde_json::to_string(&self.diagnostics).expect("diagnostics serialize")
    }

    /// Largest violation of the four moment conditions (0 when all hold).
    pub fn moment_violation(&self) -> f64 {
        let d = &self.diagnostics;
        let mean = d.mean.iter().map(|m| m.abs()).fold(0.0, f64::max);
        (d.mass - 1.0)
            .abs()
            .max(mean)
            .max(d.second_moment - self.eta)
            .max(d.off_zero_mass - self.eta)
            .max(0.0)
    }
}

/// Tilts by `θ*`, then mixes in the zero atom with the largest `λ` keeping
/// both the second moment and the off-zero mass below `eta`.
pub fn esscher_weights(cloud: &IncrementCloud, min: &Minimizer, eta: f64) -> Result<EsscherResult> {
    if !(eta > 0.0) {
        return domain(format!("eta must be positive, got {eta}"));
    }
    if cloud.zero_mass <= 0.0 {
        return Err(Error::NoZeroMass);
    }
    let e = exponents(cloud, &min.theta);
    let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let phi: f64 = e.iter().zip(&cloud.weights).map(|(e, w)| w * (e - m).exp()).sum();
    let zp: Vec<f64> = e.iter().map(|e| (e - m).exp() / phi).collect();
    let (mut second, mut off) = (0.0, 0.0);
    for i in 0..cloud.len() {
        if !cloud.is_zero(i) {
            let wz = cloud.weights[i] * zp[i];
            second += wz * dot(cloud.point(i), cloud.point(i));
            off += wz;
        }
    }
    let mut lambda: f64 = 1.0;
    if second > 0.0 {
        lambda = lambda.min(eta / second);
    }
    if off > 0.0 {
        lambda = lambda.min(eta / off);
    }
    let mu = (1.0 - lambda) / cloud.zero_mass;
    let z: Vec<f64> = (0..cloud.len())
        .map(|i| lambda * zp[i] + if cloud.is_zero(i) { mu } else { 0.0 })
        .collect();
    if let Some(bad) = z.iter().find(|z| !(**z > 0.0)) {
        return Err(Error::MomentBound(format!("non-positive Esscher weight {bad}")));
    }
    let diagnostics = summarize(cloud, &z, min, lambda, mu);
    Ok(EsscherResult {
        theta_star: min.theta.clone(),
        z_weights: z,
        eta,
        diagnostics,
    })
}

fn summarize(cloud: &IncrementCloud, z: &[f64], min: &Minimizer, lambda: f64, mu: f64) -> EsscherDiagnostics {
    let mut mass = 0.0;
    let mut mean = vec![0.0; cloud.dim];
    let mut second = 0.0;
    let mut off = 0.0;
    for i in 0..cloud.len() {
        let wz = cloud.weights[i] * z[i];
        let x = cloud.point(i);
        mass += wz;
        for (m, xi) in mean.iter_mut().zip(x) {
            *m += wz * xi;
        }
        second += wz * dot(x, x);
        if !cloud.is_zero(i) {
            off += wz;
        }
    }
    EsscherDiagnostics {
        iterations: min.iterations,
        grad_norm: min.grad_norm,
        lambda,
        mu,
        mass,
        mean,
        second_moment: second,
        off_zero_mass: off,
    }
}

/// Minimize, then weight.
pub fn esscher(cloud: &IncrementCloud, eta: f64, tol: f64) -> Result<EsscherResult> {
    let min = esscher_minimize(cloud, tol)?;
    esscher_weights(cloud, &min, eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cloud1(points: &[f64], weights: &[f64]) -> IncrementCloud {
        IncrementCloud::new(1, points.iter().map(|x| vec![*x]).collect(), weights.to_vec()).unwrap()
    }

    #[test]
    fn interval_interior() {
        let c = check_interior(&cloud1(&[-1.0, 0.0, 2.0], &[1.0, 1.0, 1.0]));
        assert!(c.ok);
        assert_eq!(c.delta, 1.0);
        let c = check_interior(&cloud1(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]));
        assert!(!c.ok);
        assert_eq!(c.delta, 0.0);
    }

    #[test]
    fn diamond_inradius() {
        let pts = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0], vec![0.0, 0.0]];
        let c = check_interior(&IncrementCloud::uniform(2, pts.clone()).unwrap());
        // Brute force: every pair of points whose line leaves all others on one side.
        let mut best = f64::INFINITY;
        for a in &pts {
            for b in &pts {
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let len = (dx * dx + dy * dy).sqrt();
                if len == 0.0 {
                    continue;
                }
                let side = |p: &Vec<f64>| (dx * (p[1] - a[1]) - dy * (p[0] - a[0])) / len;
                if pts.iter().all(|p| side(p) >= -1e-12) {
                    best = best.min(side(&vec![0.0, 0.0]));
                }
            }
        }
        assert!((best - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(c.ok && (c.delta - best).abs() < 1e-12);
    }

    #[test]
    fn collinear_cloud_is_degenerate() {
        let pts = vec![vec![1.0, 1.0], vec![-1.0, -1.0], vec![0.0, 0.0]];
        assert!(!check_interior(&IncrementCloud::uniform(2, pts).unwrap()).ok);
    }

    #[test]
    fn sampled_directions_on_cube() {
        let mut pts = vec![vec![0.0; 3]];
        for j in 0..3 {
            for s in [-1.0, 1.0] {
                let mut p = vec![0.0; 3];
                p[j] = s;
                pts.push(p);
            }
        }
        let c = check_interior(&IncrementCloud::uniform(3, pts).unwrap());
        // Octahedron inradius 1/√3; the sampled value can only overshoot it.
        assert!(c.ok && !c.exact);
        assert!(c.delta >= 1.0 / 3f64.sqrt() - 1e-12 && c.delta < 0.62);
    }

    #[test]
    fn symmetric_minimizers() {
        let m = esscher_minimize(&cloud1(&[-1.0, 1.0], &[0.5, 0.5]), 1e-12).unwrap();
        assert!(m.theta[0].abs() < 1e-12);
        let pts = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let m = esscher_minimize(&IncrementCloud::uniform(2, pts).unwrap(), 1e-12).unwrap();
        assert!(norm(&m.theta) < 1e-12);
    }

    #[test]
    fn asymmetric_pair_closed_form() {
        let m = esscher_minimize(&cloud1(&[-1.0, 2.0], &[0.5, 0.5]), 1e-13).unwrap();
        let exact = -(2f64.ln()) / 3.0;
        assert!((m.theta[0] - exact).abs() < 1e-10);
        // Grid search on φ.
        let phi = |t: f64| 0.5 * (-t).exp() + 0.5 * (2.0 * t).exp();
        let grid = (0..200_000).map(|k| -1.0 + k as f64 * 1e-5);
        let best = grid.min_by(|a, b| phi(*a).partial_cmp(&phi(*b)).unwrap()).unwrap();
        assert!((best - exact).abs() < 1e-5);
    }

    #[test]
    fn no_solution_off_interior() {
        let err = esscher_minimize(&cloud1(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]), 1e-12).unwrap_err();
        assert!(matches!(err, Error::NoEsscherSolution { .. }));
    }

    #[test]
    fn huge_eta_keeps_tilt() {
        let r = esscher(&cloud1(&[-1.0, 0.0, 2.0], &[1.0, 1.0, 1.0]), 1e6, 1e-13).unwrap();
        assert_eq!(r.diagnostics.lambda, 1.0);
        assert_eq!(r.diagnostics.mu, 0.0);
    }

    #[test]
    fn three_point_cloud_direct_summation() {
        let c = cloud1(&[-1.0, 0.0, 2.0], &[1.0, 1.0, 1.0]);
        let r = esscher(&c, 0.1, 1e-13).unwrap();
        // Oracle: θ* solves −e^{−θ} + 2e^{2θ} = 0 (the zero point drops out).
        let th = -(2f64.ln()) / 3.0;
        let phi = ((-th).exp() + 1.0 + (2.0 * th).exp()) / 3.0;
        let zp = [(-th).exp() / phi, 1.0 / phi, (2.0 * th).exp() / phi];
        let second = (zp[0] + 4.0 * zp[2]) / 3.0;
        let off = (zp[0] + zp[2]) / 3.0;
        let lambda = (0.1 / second).min(0.1 / off).min(1.0);
        assert!((r.diagnostics.lambda - lambda).abs() < 1e-12);
        let mu = (1.0 - lambda) * 3.0;
        let z = [lambda * zp[0], lambda * zp[1] + mu, lambda * zp[2]];
        for (a, b) in r.z_weights.iter().zip(z) {
            assert!((a - b).abs() < 1e-10);
        }
        let w = 1.0 / 3.0;
        assert!((w * (z[0] + z[1] + z[2]) - 1.0).abs() < 1e-10);
        assert!((w * (-z[0] + 2.0 * z[2])).abs() < 1e-10);
        assert!(w * (z[0] + 4.0 * z[2]) <= 0.1 + 1e-12);
        assert!(w * (z[0] + z[2]) <= 0.1 + 1e-12);
        assert!(r.moment_violation() < 1e-10);
    }

    #[test]
    fn centred_cloud_untouched() {
        let r = esscher(&cloud1(&[-1.0, 1.0, 0.0], &[0.25, 0.25, 0.5]), 0.5, 1e-13).unwrap();
        assert!(r.theta_star[0].abs() < 1e-12);
        assert!((r.diagnostics.lambda - 1.0).abs() < 1e-12);
        for z in &r.z_weights {
            assert!((z - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mass_required() {
        let c = cloud1(&[-1.0, 2.0], &[0.5, 0.5]);
        let m = esscher_minimize(&c, 1e-12).unwrap();
        assert!(matches!(esscher_weights(&c, &m, 0.1), Err(Error::NoZeroMass)));
    }

    #[test]
    fn diagnostics_serialize() {
        let r = esscher(&cloud1(&[-1.0, 0.0, 2.0], &[1.0, 1.0, 1.0]), 0.1, 1e-13).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.diagnostics_line()).unwrap();
        assert!(v["lambda"].as_f64().unwrap() > 0.0);
    }

    proptest! {
        #[test]
        fn negation_flips_theta(xs in proptest::collection::vec(-3.0f64..3.0, 2..6),
                                ws in proptest::collection::vec(0.05f64..1.0, 8)) {
            let mut pts = xs.clone();
            pts.push(-0.5);
            pts.push(0.7);
            let c = cloud1(&pts, &ws[..pts.len()]);
            let a = esscher_minimize(&c, 1e-12).unwrap();
            let b = esscher_minimize(&c.negated(), 1e-12).unwrap();
            prop_assert!((a.theta[0] + b.theta[0]).abs() < 1e-8);
            // Strict convexity witness.
            let f0 = log_mgf(&c, &a.theta);
            prop_assert!(f0 < log_mgf(&c, &[a.theta[0] + 1e-4]));
            prop_assert!(f0 < log_mgf(&c, &[a.theta[0] - 1e-4]));
        }
    }
}
