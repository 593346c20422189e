//! Lorentz hyperboloid kernel and bounded/product metric constructions.
//!
//! Points of the hyperboloid live in ambient Minkowski space `R^{d+1}` with
//! `<x,x>_L = -1` and `x_0 > 0`. Only maps based at the origin
//! `o = (1, 0, ..., 0)` are provided; the tangent space there is the
//! hyperplane `x_0 = 0`, which is stored as its `d` spatial coordinates.
//!
//! Curvature is fixed at `-1`. Everything is `f64`: the hyperbolic maps
//! amplify roundoff exponentially with radius, and at radius 10 the time
//! coordinate squared is already ~1.2e8. Inner products are therefore
//! evaluated with compensated (double-double) arithmetic.

use crate::error::{JanusError, Result};

/// Below this tangent norm (or distance from the origin) the maps return the
/// exact origin / exact zero vector.
pub const EPS_EXP: f64 = 1e-12;

/// Tolerance used when validating hyperboloid membership of user data.
pub const MANIFOLD_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// double-double helpers

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[cfg(target_feature = "fma")]
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

/// Dekker's exact product; avoids a libm `fma` call per term on targets
/// without hardware FMA. Exact unless `|a|` or `|b|` exceeds about 1e300.
#[cfg(not(target_feature = "fma"))]
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    #[inline]
    fn split(x: f64) -> (f64, f64) {
        const FACTOR: f64 = 134_217_729.0; // 2^27 + 1
        let c = FACTOR * x;
        let hi = c - (c - x);
        (hi, x - hi)
    }
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    let err = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
    (p, err)
}

/// Accumulates `sum_i sign_i * a_i * b_i` in double-double; returns (hi, lo).
#[inline]
fn dot2<I: Iterator<Item = (f64, f64)>>(terms: I) -> (f64, f64) {
    let mut hi = 0.0;
    let mut lo = 0.0;
    for (a, b) in terms {
        let (p, pe) = two_prod(a, b);
        let (s, se) = two_sum(hi, p);
        hi = s;
        lo += pe + se;
    }
    two_sum(hi, lo)
}

/// Compensated Minkowski product on raw slices, returned as a double-double.
#[inline]
pub(crate) fn minkowski_dd(a: &[f64], b: &[f64]) -> (f64, f64) {
    debug_assert_eq!(a.len(), b.len());
    dot2(std::iter::once((-a[0], b[0])).chain(a[1..].iter().copied().zip(b[1..].iter().copied())))
}

/// `arcosh(1 + t)` for `t >= 0`, accurate for small `t`.
#[inline]
pub(crate) fn arcosh1p(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (t + (t * (t + 2.0)).sqrt()).ln_1p()
    }
}

/// Geodesic distance between raw ambient coordinate slices, plus
/// `t = -<x,y>_L - 1` (clamped at zero). Shared with the autodiff kernels.
///
/// `t` is evaluated as `<x-y, x-y>_L / 2`, which equals `-<x,y>_L - 1` on the
/// manifold but cancels the points' own representation residuals, so that
/// coincident points are at distance exactly zero.
#[inline]
pub(crate) fn geodesic_raw(x: &[f64], y: &[f64]) -> (f64, f64) {
    let d0 = x[0] - y[0];
    let (xs, ys) = (&x[1..], &y[1..]);
    let time_sq = d0 * d0;
    let mut lanes = [0.0; 4];
    let mut chunks_x = xs.chunks_exact(4);
    let mut chunks_y = ys.chunks_exact(4);
    for (cx, cy) in (&mut chunks_x).zip(&mut chunks_y) {
        for l in 0..4 {
            let d = cx[l] - cy[l];
            lanes[l] += d * d;
        }
    }
    for (a, b) in chunks_x.remainder().iter().zip(chunks_y.remainder()) {
        lanes[0] += (a - b) * (a - b);
    }
    let space_sq = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    // The plain difference loses at most a factor 16 to cancellation here.
    let t = if time_sq <= 0.9375 * space_sq {
        0.5 * (space_sq - time_sq)
    } else {
        let (hi, lo) = dot2(std::iter::once((-d0, d0)).chain(xs.iter().zip(ys).map(|(a, b)| (a - b, a - b))));
        0.5 * (hi + lo)
    };
    let t = t.max(0.0);
    (arcosh1p(t), t)
}

/// Writes `exp_o([0, v])` into `out` (length `v.len() + 1`).
pub(crate) fn exp_origin_into(v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), v.len() + 1);
    let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if r < EPS_EXP {
        out[0] = 1.0;
        out[1..].iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let s = r.sinh() / r;
    for (o, &x) in out[1..].iter_mut().zip(v) {
        *o = s * x;
    }
    project_in_place(out);
}

/// Writes `log_o(y)` into `out` (length `y.len() - 1`).
pub(crate) fn log_origin_into(y: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len() + 1, y.len());
    let spatial = &y[1..];
    let rho = spatial.iter().map(|x| x * x).sum::<f64>().sqrt();
    // On the manifold ||y_s|| = sinh(d(o, y)).
    let dist = rho.asinh();
    if dist < EPS_EXP {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let s = dist / rho;
    for (o, &x) in out.iter_mut().zip(spatial) {
        *o = s * x;
    }
}

/// Restores `<x,x>_L = -1` in place.
///
/// Sets `x_0 = sqrt(1 + ||x_s||^2)` rounded to nearest, then cancels the
/// remaining representation residual `x_0^2 - 1 - ||x_s||^2` by adjusting the
/// spatial coordinate whose magnitude makes the correction both small and
/// finely representable.
pub(crate) fn project_in_place(x: &mut [f64]) {
    let spatial_sq = dot2(x[1..].iter().map(|&v| (v, v)));
    let (t_hi, t_lo) = {
        let (s, e) = two_sum(spatial_sq.0, 1.0);
        two_sum(s, e + spatial_sq.1)
    };
    let mut x0 = t_hi.sqrt();
    // one Newton step in double-double precision
    let (sq, sq_e) = two_prod(x0, x0);
    x0 += ((t_hi - sq) + (t_lo - sq_e)) / (2.0 * x0);
    x[0] = x0;

    let (sq, sq_e) = two_prod(x0, x0);
    let residual = (sq - t_hi) + (sq_e - t_lo);
    if residual == 0.0 || x.len() < 2 {
        return;
    }
    // Prefer the largest coordinate that still has a fine enough grid
    // (|x_j| <= 64 gives a residual granularity below ~2e-12).
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in x.iter().enumerate().skip(1) {
        let a = v.abs();
        if a == 0.0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, b)) => {
                if a <= 64.0 {
                    b > 64.0 || a > b
                } else {
                    b > 64.0 && a < b
                }
            }
        };
        if better {
            best = Some((j, a));
        }
    }
    if let Some((j, a)) = best {
        let delta = residual / (2.0 * x[j]);
        // Skip corrections that would visibly move the point.
        if delta.abs() <= 1e-6 * a.max(1.0) {
            x[j] += delta;
        }
    }
    for steps in LATTICE_STEPS {
        if lorentz_residual(x).abs() <= LATTICE_TARGET {
            break;
        }
        lattice_refine(x, steps);
    }
}

/// Residual below which [`lattice_refine`] is not attempted.
const LATTICE_TARGET: f64 = 1e-10;
/// Ulp offset bounds of successive [`lattice_refine`] passes. The wider pass
/// covers coordinates with a short integer relation, whose combinations
/// cluster within the narrow box.
const LATTICE_STEPS: [i32; 2] = [40, 320];

/// `<x,x>_L + 1` in double-double, rounded once.
fn lorentz_residual(x: &[f64]) -> f64 {
    let (hi, lo) = minkowski_dd(x, x);
    (hi + 1.0) + lo
}

fn ulp(a: f64) -> f64 {
    let a = a.abs();
    f64::from_bits(a.to_bits() + 1) - a
}

/// Moves the three largest coordinates by a few ulps each so that their
/// combined effect on `<x,x>_L` cancels the residual.
///
/// Needed when every coordinate is large: a one-ulp step of a single
/// coordinate `c` changes the form by `2 |c| ulp(c)`, which exceeds the
/// tolerance once `|c|` is in the thousands. Integer combinations of three
/// such steps are much finer. Keeps `x` unchanged if no combination helps.
fn lattice_refine(x: &mut [f64], max_steps: i32) {
    if x.len() < 3 {
        return;
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()));
    let idx = [order[0], order[1], order[2]];
    let vals = idx.map(|i| x[i]);
    let steps = idx.map(|i| ulp(x[i]));
    // Signed effect on <x,x>_L of moving the `m`-th chosen coordinate by `k` ulps.
    let effect = |m: usize, k: f64| {
        let sign = if idx[m] == 0 { -1.0 } else { 1.0 };
        let d = k * steps[m];
        sign * (2.0 * vals[m] * d + d * d)
    };
    let r = lorentz_residual(x);
    let g2 = effect(2, 1.0);
    if g2 == 0.0 {
        return;
    }

    let mut best = (r.abs(), [0.0; 3]);
    for k0 in -max_steps..=max_steps {
        let r0 = r + effect(0, f64::from(k0));
        for k1 in -max_steps..=max_steps {
            let r1 = r0 + effect(1, f64::from(k1));
            let k2 = (-r1 / g2).round();
            if k2.abs() > f64::from(max_steps) {
                continue;
            }
            let pred = (r1 + effect(2, k2)).abs();
            if pred < best.0 {
                best = (pred, [f64::from(k0), f64::from(k1), k2]);
            }
        }
    }

    for m in 0..3 {
        x[idx[m]] = vals[m] + best.1[m] * steps[m];
    }
    if lorentz_residual(x).abs() >= r.abs() {
        for m in 0..3 {
            x[idx[m]] = vals[m];
        }
    }
}

// ---------------------------------------------------------------------------
// public types

/// A point on the upper sheet of the hyperboloid, in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HPoint {
    coords: Vec<f64>,
}

impl HPoint {
    /// Validates that `coords` lies on the hyperboloid within [`MANIFOLD_TOL`].
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(JanusError::mismatch("HPoint", "length >= 2", coords.len()));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(JanusError::NonFinite("HPoint coordinates"));
        }
        let p = HPoint { coords };
        let dev = p.manifold_deviation();
        if p.coords[0] < 1.0 || dev > MANIFOLD_TOL {
            return Err(JanusError::InvalidInput(format!(
                "point is off the hyperboloid (x0 = {}, |<x,x>+1| = {dev:e})",
                p.coords[0]
            )));
        }
        Ok(p)
    }

    /// Projects arbitrary spatial coordinates onto the hyperboloid.
    pub fn from_spatial(spatial: &[f64]) -> Result<Self> {
        if spatial.iter().any(|v| !v.is_finite()) {
            return Err(JanusError::NonFinite("HPoint spatial coordinates"));
        }
        let mut coords = Vec::with_capacity(spatial.len() + 1);
        coords.push(0.0);
        coords.extend_from_slice(spatial);
        project_in_place(&mut coords);
        Ok(HPoint { coords })
    }

    /// The origin `o = (1, 0, ..., 0)` of `H^dim`.
    pub fn origin(dim: usize) -> Self {
        let mut coords = vec![0.0; dim + 1];
        coords[0] = 1.0;
        HPoint { coords }
    }

    /// Intrinsic dimension `d` (ambient length minus one).
    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// `|<x,x>_L + 1|`, computed with compensated arithmetic.
    pub fn manifold_deviation(&self) -> f64 {
        let (hi, lo) = minkowski_dd(&self.coords, &self.coords);
        ((hi + 1.0) + lo).abs()
    }

    /// Re-projects after arithmetic that may have left the manifold.
    pub fn renormalize(&mut self) {
        project_in_place(&mut self.coords);
    }
}

/// A tangent vector at the origin, stored as its spatial part `v^E`.
#[derive(Debug, Clone, PartialEq)]
pub struct HTangent {
    coords: Vec<f64>,
}

impl HTangent {
    pub fn new(coords: Vec<f64>) -> Self {
        HTangent { coords }
    }

    pub fn zeros(dim: usize) -> Self {
        HTangent {
            coords: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Ambient representation `[0, v^E]`.
    pub fn ambient(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.coords.len() + 1);
        out.push(0.0);
        out.extend_from_slice(&self.coords);
        out
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Weights of the two-factor bounded product metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedMetricParams {
    k1: f64,
    k2: f64,
}

impl BoundedMetricParams {
    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        if !(k1 > 0.0 && k2 > 0.0) || !k1.is_finite() || !k2.is_finite() {
            return Err(JanusError::InvalidInput(format!(
                "bounded metric weights must be positive, got k1={k1}, k2={k2}"
            )));
        }
        Ok(BoundedMetricParams { k1, k2 })
    }

    /// The normalized weights `k1 = k2 = 1/2` used by the model.
    pub fn halves() -> Self {
        BoundedMetricParams { k1: 0.5, k2: 0.5 }
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    /// `k1 * d1/(1+d1) + k2 * d2/(1+d2)`.
    pub fn combine(&self, d1: f64, d2: f64) -> Result<f64> {
        Ok(bounded(d1, self.k1)? + bounded(d2, self.k2)?)
    }
}

// ---------------------------------------------------------------------------
// operations

/// `-a_0 b_0 + sum_{i>=1} a_i b_i`, compensated.
pub fn minkowski_inner(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(JanusError::mismatch("minkowski_inner", a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(JanusError::mismatch("minkowski_inner", "length >= 2", a.len()));
    }
    let (hi, lo) = minkowski_dd(a, b);
    Ok(hi + lo)
}

/// `arcosh(-<x,y>_L)` with the argument clamped to `[1, inf)`.
pub fn geodesic_dist(x: &HPoint, y: &HPoint) -> Result<f64> {
    if x.coords.len() != y.coords.len() {
        return Err(JanusError::mismatch(
            "geodesic_dist",
            x.coords.len(),
            y.coords.len(),
        ));
    }
    Ok(geodesic_raw(&x.coords, &y.coords).0)
}

/// Exponential map at the origin.
pub fn exp_origin(v: &HTangent) -> Result<HPoint> {
    if v.coords.iter().any(|x| !x.is_finite()) {
        return Err(JanusError::NonFinite("exp_origin input"));
    }
    let mut coords = vec![0.0; v.coords.len() + 1];
    exp_origin_into(&v.coords, &mut coords);
    if coords.iter().any(|x| !x.is_finite()) {
        return Err(JanusError::NonFinite("exp_origin output (tangent norm too large)"));
    }
    Ok(HPoint { coords })
}

/// Logarithmic map at the origin.
pub fn log_origin(y: &HPoint) -> HTangent {
    let mut coords = vec![0.0; y.dim()];
    log_origin_into(&y.coords, &mut coords);
    HTangent { coords }
}

/// `k * d/(1+d)`: a metric transform with diameter below `k`.
pub fn bounded(d_val: f64, k: f64) -> Result<f64> {
    if !(d_val >= 0.0) {
        return Err(JanusError::InvalidInput(format!(
            "bounded() needs a nonnegative distance, got {d_val}"
        )));
    }
    if !(k > 0.0) {
        return Err(JanusError::InvalidInput(format!(
            "bounded() needs a positive diameter, got {k}"
        )));
    }
    if d_val.is_infinite() {
        return Ok(k);
    }
    Ok(k * d_val / (1.0 + d_val))
}

fn euclidean_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Normalized product distance between `(a1, a2)` and `(a3, a4)`:
/// half the sum of the bounded Euclidean distance `|a1 - a3|` and the
/// bounded geodesic distance `d_L(a2, a4)`. Lies in `[0, 1)`.
pub fn product_distance(a1: &[f64], a2: &HPoint, a3: &[f64], a4: &HPoint) -> Result<f64> {
    if a1.len() != a3.len() {
        return Err(JanusError::mismatch("product_distance (euclidean)", a1.len(), a3.len()));
    }
    let e = euclidean_dist(a1, a3);
    let h = geodesic_dist(a2, a4)?;
    Ok(0.5 * (bounded(e, 1.0)? + bounded(h, 1.0)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn minkowski_examples() {
        assert_eq!(minkowski_inner(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap(), -1.0);
        assert_eq!(minkowski_inner(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(minkowski_inner(&[2.0, 1.0, 1.0], &[3.0, 1.0, 2.0]).unwrap(), -3.0);
        assert!(minkowski_inner(&[1.0, 0.0], &[1.0, 0.0, 0.0]).is_err());
        assert!(minkowski_inner(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn exp_examples() {
        let o = exp_origin(&HTangent::zeros(3)).unwrap();
        assert_eq!(o, HPoint::origin(3));
        let p = exp_origin(&HTangent::new(vec![0.6, 0.8])).unwrap();
        let c = p.coords();
        assert!(approx(c[0], 1f64.cosh(), 1e-12));
        assert!(approx(c[1], 0.6 * 1f64.sinh(), 1e-12));
        assert!(approx(c[2], 0.8 * 1f64.sinh(), 1e-12));
        assert!(approx(c[0], 1.54308, 1e-5));
        // quoted values are truncated to five digits (0.705120..., 0.940160...)
        assert!(approx(c[1], 0.70511, 2e-5));
        assert!(approx(c[2], 0.94015, 2e-5));
        assert!(p.manifold_deviation() < 1e-9);
        assert!(exp_origin(&HTangent::new(vec![f64::NAN, 0.0])).is_err());
    }

    #[test]
    fn exp_below_threshold_is_exact_origin() {
        let p = exp_origin(&HTangent::new(vec![1e-13, 0.0])).unwrap();
        assert_eq!(p, HPoint::origin(2));
        let v = log_origin(&HPoint::from_spatial(&[1e-14, 0.0]).unwrap());
        assert_eq!(v.coords(), &[0.0, 0.0]);
    }

    #[test]
    fn log_examples() {
        assert_eq!(log_origin(&HPoint::origin(4)).coords(), &[0.0; 4]);
        let y = HPoint::new(vec![2f64.cosh(), 2f64.sinh(), 0.0]).unwrap();
        let v = log_origin(&y);
        assert!(approx(v.coords()[0], 2.0, 1e-12));
        assert_eq!(v.coords()[1], 0.0);
    }

    #[test]
    fn distance_examples() {
        let o = HPoint::origin(2);
        assert_eq!(geodesic_dist(&o, &o).unwrap(), 0.0);
        let p = exp_origin(&HTangent::new(vec![0.6, 0.8])).unwrap();
        assert!(approx(geodesic_dist(&o, &p).unwrap(), 1.0, 1e-12));
        assert!(geodesic_dist(&o, &HPoint::origin(3)).is_err());
    }

    #[test]
    fn distance_tolerates_roundoff_below_one() {
        // slightly off-manifold copy: -<x,y> evaluates marginally below 1
        let x = HPoint::from_spatial(&[0.3, -0.2]).unwrap();
        let mut c = x.coords().to_vec();
        c[0] -= 1e-15;
        let y = HPoint { coords: c };
        let d = geodesic_dist(&x, &y).unwrap();
        assert!(d.is_finite() && d >= 0.0 && d < 1e-7);
    }

    #[test]
    fn bounded_examples() {
        assert_eq!(bounded(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(bounded(1.0, 0.5).unwrap(), 0.25);
        assert_eq!(bounded(3.0, 0.5).unwrap(), 0.375);
        assert!(bounded(-1.0, 1.0).is_err());
        assert!(bounded(1.0, 0.0).is_err());
        assert!(bounded(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn product_distance_examples() {
        let a = [0.1, 0.2];
        let p = HPoint::from_spatial(&[0.5, -0.5]).unwrap();
        assert_eq!(product_distance(&a, &p, &a, &p).unwrap(), 0.0);

        let o = HPoint::origin(2);
        let far = exp_origin(&HTangent::new(vec![3.0, 0.0])).unwrap();
        let d = product_distance(&[0.0, 0.0], &o, &[1.0, 0.0], &far).unwrap();
        assert!(approx(d, 0.625, 1e-12));
        assert!(product_distance(&[0.0], &o, &[1.0, 0.0], &far).is_err());
    }

    #[test]
    fn weighted_product_metric() {
        let w = BoundedMetricParams::new(1.0, 2.0).unwrap();
        assert!(approx(w.combine(1.0, 1.0).unwrap(), 1.5, 1e-15));
        assert!(BoundedMetricParams::new(0.0, 1.0).is_err());
        assert_eq!(BoundedMetricParams::halves().k1(), 0.5);
    }

    #[test]
    fn projection_reaches_tolerance_at_radius_ten() {
        let p = exp_origin(&HTangent::new(vec![6.0, 8.0, 0.0, 0.001])).unwrap();
        assert!(p.manifold_deviation() < 1e-9, "{}", p.manifold_deviation());
        assert!(p.coords()[0] >= 1.0);
    }

    #[test]
    fn projection_handles_only_large_coordinates() {
        // every spatial coordinate is in the thousands at radius ten
        for k in 0..200 {
            let theta = 0.3 + 0.004 * f64::from(k);
            let v = vec![10.0 * theta.cos(), 10.0 * theta.sin()];
            let p = exp_origin(&HTangent::new(v.clone())).unwrap();
            assert!(p.coords()[1..].iter().all(|c| c.abs() > 64.0));
            assert!(p.manifold_deviation() < 1e-9, "{}", p.manifold_deviation());
            let back = log_origin(&p);
            assert!(approx(back.coords()[0], v[0], 1e-8) && approx(back.coords()[1], v[1], 1e-8));
        }
    }

    #[test]
    fn hpoint_validation() {
        assert!(HPoint::new(vec![2.0, 0.0]).is_err());
        assert!(HPoint::new(vec![-1.0, 0.0]).is_err());
        assert!(HPoint::new(vec![1.0]).is_err());
        let mut p = HPoint::from_spatial(&[1.0, 2.0]).unwrap();
        p.coords[1] += 0.5;
        p.renormalize();
        assert!(p.manifold_deviation() < 1e-9);
    }
}
