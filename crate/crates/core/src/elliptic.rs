//! The stationary drift-diffusion problem `−Δv + A b·∇v = f` on the torus,
//! its drift-independent `H¹` bound and its logarithmic modulus of continuity.
//!
//! The Galerkin system lives on the dealiased band.  It is solved as
//! `(I + A D P(b·∇) D) y = D f`, `v = D y` with `D = (−Δ)^{−1/2}`, so the
//! Krylov operator is the identity plus a skew-symmetric part.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    is_pair_representative, to_physical, Lattice, PhysicalDrift, SpectralField, VelocityField, Wavenumber,
    Workspace,
};

#[derive(Clone, Debug)]
pub struct EllipticProblem {
    b: VelocityField,
    f: SpectralField,
    amplitude: f64,
}

impl EllipticProblem {
    pub fn new(b: VelocityField, f: SpectralField, amplitude: f64) -> Result<Self> {
        if b.lattice() != f.lattice() {
            return Err(Error::invalid("drift and source live on different lattices"));
        }
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::invalid(format!("drift amplitude must be >= 0, got {amplitude}")));
        }
        if f.get([0, 0]).norm() > 0.0 {
            return Err(Error::invalid("source must have zero mean"));
        }
        let div = b.divergence_residual();
        if div > 1e-13 {
            return Err(Error::invalid(format!("drift divergence residual {div:e} exceeds 1e-13")));
        }
        Ok(Self { b, f: f.dealiased(), amplitude })
    }

    pub fn b(&self) -> &VelocityField {
        &self.b
    }

    pub fn f(&self) -> &SpectralField {
        &self.f
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn lattice(&self) -> &Lattice {
        self.f.lattice()
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Result<Self> {
        Self::new(self.b.clone(), self.f.clone(), amplitude)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticOptions {
    /// Relative residual target `‖Lv − f‖ / ‖f‖`.
    pub tol: f64,
    /// Krylov restart length; `None` means the full dimension.
    pub restart: Option<usize>,
    pub max_iterations: usize,
    /// Step cap for the pseudo-time fallback.
    pub pseudo_time_steps: usize,
}

impl Default for EllipticOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            restart: None,
            max_iterations: 20_000,
            pseudo_time_steps: 200_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Gmres,
    PseudoTime,
}

#[derive(Clone, Debug)]
pub struct EllipticSolution {
    pub v: SpectralField,
    /// Achieved `‖Lv − f‖ / ‖f‖` (zero for `f = 0`).
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

/// Real coordinates of the Galerkin unknowns: `(Re, Im)` of each pair representative.
struct Operator {
    lattice: Lattice,
    modes: Vec<Wavenumber>,
    /// `|k|^{−1}` per representative.
    d: Vec<f64>,
    ws: Workspace,
    drift: PhysicalDrift,
    amplitude: f64,
    buf: SpectralField,
}

impl Operator {
    fn new(problem: &EllipticProblem) -> Self {
        let lattice = *problem.lattice();
        let modes: Vec<Wavenumber> = lattice
            .active_wavenumbers()
            .filter(|&k| is_pair_representative(k) && lattice.is_dealiased(k))
            .collect();
        let d = modes.iter().map(|&k| lattice.k_sq(k).sqrt().recip()).collect();
        let mut ws = Workspace::new(lattice);
        let drift = ws.sample_drift(&problem.b);
        Self {
            lattice,
            modes,
            d,
            ws,
            drift,
            amplitude: problem.amplitude,
            buf: SpectralField::zeros(lattice),
        }
    }

    fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    fn gather(&self, field: &SpectralField, out: &mut [f64]) {
        for (j, &k) in self.modes.iter().enumerate() {
            let c = field.get(k);
            out[2 * j] = c.re;
            out[2 * j + 1] = c.im;
        }
    }

    fn scatter(&self, x: &[f64]) -> SpectralField {
        let mut field = SpectralField::zeros(self.lattice);
        for (j, &k) in self.modes.iter().enumerate() {
            field.set(k, Complex64::new(x[2 * j], x[2 * j + 1])).expect("dealiased modes are active");
        }
        field
    }

    fn scale_by_d(&self, x: &mut [f64], power: i32) {
        for (j, d) in self.d.iter().enumerate() {
            let s = d.powi(power);
            x[2 * j] *= s;
            x[2 * j + 1] *= s;
        }
    }

    /// `A P(b·∇v)` for a spectral `v`.
    fn advect(&mut self, v: &SpectralField) -> SpectralField {
        let mut out = std::mem::replace(&mut self.buf, SpectralField::zeros(self.lattice));
        self.ws.advection_into(&self.drift, v, -self.amplitude, &mut out);
        let result = out.clone();
        self.buf = out;
        result
    }

    /// `y ↦ (I + A D P(b·∇) D) y`.
    fn apply_preconditioned(&mut self, y: &[f64], out: &mut [f64]) {
        let mut dy = y.to_vec();
        self.scale_by_d(&mut dy, 1);
        let adv = self.advect(&self.scatter(&dy));
        self.gather(&adv, out);
        self.scale_by_d(out, 1);
        for (o, yi) in out.iter_mut().zip(y) {
            *o += yi;
        }
    }

    /// `‖−Δv + A P(b·∇v) − f‖_{L²}`.
    fn residual(&mut self, v: &SpectralField, f: &SpectralField) -> f64 {
        let mut r = v.laplacian();
        r.scale(-1.0);
        r.axpy(1.0, &self.advect(v));
        r.axpy(-1.0, f);
        r.l2_sq().sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// One restarted GMRES cycle from `x`; returns the iterations used and the
/// final preconditioned residual norm.
fn gmres_cycle(op: &mut Operator, rhs: &[f64], x: &mut [f64], restart: usize, target: f64) -> (usize, f64) {
    let n = rhs.len();
    let mut r = vec![0.0; n];
    op.apply_preconditioned(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    let beta = norm(&r);
    if beta <= target {
        return (0, beta);
    }
    let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
    let mut h: Vec<Vec<f64>> = Vec::new();
    let (mut cs, mut sn): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut g = vec![beta];
    let mut w = vec![0.0; n];
    let mut res = beta;
    let mut used = 0;
    for j in 0..restart {
        op.apply_preconditioned(&basis[j], &mut w);
        let mut col = vec![0.0; j + 2];
        // Modified Gram–Schmidt, applied twice.
        for _ in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let c = dot(&w, q);
                col[i] += c;
                for (wk, qk) in w.iter_mut().zip(q) {
                    *wk -= c * qk;
                }
            }
        }
        let hn = norm(&w);
        col[j + 1] = hn;
        for i in 0..j {
            let t = cs[i] * col[i] + sn[i] * col[i + 1];
            col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
            col[i] = t;
        }
        let rho = col[j].hypot(col[j + 1]);
        let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (col[j] / rho, col[j + 1] / rho) };
        cs.push(c);
        sn.push(s);
        col[j] = rho;
        col[j + 1] = 0.0;
        g.push(-s * g[j]);
        g[j] *= c;
        h.push(col);
        used = j + 1;
        res = g[j + 1].abs();
        if res <= target || hn == 0.0 || used == n {
            break;
        }
        basis.push(w.iter().map(|v| v / hn).collect());
    }
    // Back substitution on the triangularized Hessenberg matrix.
    let mut coef = vec![0.0; used];
    for i in (0..used).rev() {
        let mut s = g[i];
        for k in i + 1..used {
            s -= h[k][i] * coef[k];
        }
        coef[i] = s / h[i][i];
    }
    for (c, q) in coef.iter().zip(&basis) {
        for (xk, qk) in x.iter_mut().zip(q) {
            *xk += c * qk;
        }
    }
    (used, res)
}

/// Solves the problem from a zero initial guess.
pub fn solve_stationary(problem: &EllipticProblem, options: &EllipticOptions) -> Result<EllipticSolution> {
    solve_stationary_from(problem, options, None)
}

/// Solves the problem from the initial guess `v0` (restricted to the band).
pub fn solve_stationary_from(
    problem: &EllipticProblem,
    options: &EllipticOptions,
    v0: Option<&SpectralField>,
) -> Result<EllipticSolution> {
    if !(options.tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be > 0, got {}", options.tol)));
    }
    let f = problem.f();
    let f_norm = f.l2_sq().sqrt();
    let lat = *problem.lattice();
    if f_norm == 0.0 {
        return Ok(EllipticSolution {
            v: SpectralField::zeros(lat),
            residual: 0.0,
            iterations: 0,
            method: SolveMethod::Gmres,
        });
    }
    let mut op = Operator::new(problem);
    let n = op.dim();
    let mut rhs = vec![0.0; n];
    op.gather(f, &mut rhs);
    op.scale_by_d(&mut rhs, 1);
    let mut y = vec![0.0; n];
    if let Some(v0) = v0 {
        if v0.lattice() != &lat {
            return Err(Error::invalid("initial guess lives on a different lattice"));
        }
        op.gather(v0, &mut y);
        op.scale_by_d(&mut y, -1);
    }
    // ‖Lv − f‖ ≤ |k|_max ‖D(Lv − f)‖ and the Euclidean norm of the real
    // coordinates is ‖·‖_{L²}/√2.
    let k_top = op.d.iter().fold(f64::INFINITY, |a, &b| a.min(b)).recip();
    let target = 0.5 * options.tol * f_norm / (k_top * std::f64::consts::SQRT_2);
    let restart = options.restart.unwrap_or(n).clamp(1, n);

    let mut iterations = 0;
    let mut last = f64::INFINITY;
    loop {
        let (used, res) = gmres_cycle(&mut op, &rhs, &mut y, restart, target);
        iterations += used;
        let mut x = y.clone();
        op.scale_by_d(&mut x, 1);
        let v = op.scatter(&x);
        let rel = op.residual(&v, f) / f_norm;
        if rel <= options.tol {
            return Ok(EllipticSolution { v, residual: rel, iterations, method: SolveMethod::Gmres });
        }
        let stagnated = res > 0.9 * last || used == 0;
        if stagnated || iterations >= options.max_iterations {
            return pseudo_time(&mut op, f, v, options, iterations);
        }
        last = res;
    }
}

/// Marches `∂_t v = f − Lv` with the Laplacian implicit and the drift explicit.
fn pseudo_time(
    op: &mut Operator,
    f: &SpectralField,
    mut v: SpectralField,
    options: &EllipticOptions,
    krylov_iterations: usize,
) -> Result<EllipticSolution> {
    let lat = op.lattice;
    let f_norm = f.l2_sq().sqrt();
    let speed = op.amplitude * op.drift.max_speed();
    let k_top = op.d.iter().fold(f64::INFINITY, |a, &b| a.min(b)).recip();
    let dt = if speed > 0.0 { (0.5 / (speed * k_top)).min(1.0) } else { 1.0 };
    let mut rel = f64::INFINITY;
    for step in 1..=options.pseudo_time_steps {
        let mut next = f.clone();
        next.axpy(-1.0, &op.advect(&v));
        next.scale(dt);
        next.axpy(1.0, &v);
        next.apply_multiplier(|k| 1.0 / (1.0 + dt * lat.k_sq(k)));
        v = next;
        if step % 100 == 0 || step == options.pseudo_time_steps {
            rel = op.residual(&v, f) / f_norm;
            if !rel.is_finite() {
                break;
            }
            if rel <= options.tol {
                return Ok(EllipticSolution {
                    v,
                    residual: rel,
                    iterations: krylov_iterations + step,
                    method: SolveMethod::PseudoTime,
                });
            }
        }
    }
    Err(Error::NotConverged {
        iterations: krylov_iterations + options.pseudo_time_steps,
        residual: rel,
    })
}

/// `⟨P(b·∇w), w⟩ / (‖b‖‖∇w‖‖w‖)` for unit amplitude; vanishes for divergence-free `b`.
pub fn skew_defect(problem: &EllipticProblem, w: &SpectralField) -> Result<f64> {
    let unit = problem.with_amplitude(1.0)?;
    let mut op = Operator::new(&unit);
    let adv = op.advect(&w.dealiased());
    let scale = unit.b.l2_sq().sqrt() * w.h1_sq().sqrt() * w.l2_sq().sqrt();
    Ok(if scale > 0.0 { adv.inner(w).abs() / scale } else { 0.0 })
}

/// `‖Lv − f‖ / ‖f‖` for an arbitrary `v`.
pub fn relative_residual(problem: &EllipticProblem, v: &SpectralField) -> f64 {
    let mut op = Operator::new(problem);
    let f_norm = problem.f.l2_sq().sqrt();
    let r = op.residual(&v.dealiased(), &problem.f);
    if f_norm > 0.0 { r / f_norm } else { r }
}

/// `‖∇v‖² / ‖f‖²`.
pub fn energy_bound_check(problem: &EllipticProblem, v: &SpectralField) -> f64 {
    v.h1_sq() / problem.f.l2_sq()
}

/// Default upper end of the admissible radii.
pub const DEFAULT_R_STAR: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusOptions {
    pub centers: usize,
    pub seed: u64,
    pub r_star: f64,
    /// Rings per radius; ring `j` carries `8j` equally spaced points.
    pub rings: usize,
}

impl Default for ModulusOptions {
    fn default() -> Self {
        Self { centers: 64, seed: 0, r_star: DEFAULT_R_STAR, rings: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    /// Increasing radii.
    pub radii: Vec<f64>,
    /// `osc(r)`: the largest `|v(x) − v(y)|` over sampled pairs with `|x − y| ≤ r`.
    pub osc: Vec<f64>,
    /// `C = max_r osc(r) √(log 1/r)`.
    pub constant: f64,
    pub h1_ratio: Option<f64>,
    pub linf: f64,
    pub centers: usize,
    pub seed: u64,
}

/// Exact evaluation of a band-limited field at arbitrary points.
struct PointEvaluator {
    cut: i32,
    scale: f64,
    /// Coefficients on `[−cut, cut]²`, row-major in `k₁`.
    coeffs: Vec<Complex64>,
}

impl PointEvaluator {
    fn new(v: &SpectralField) -> Self {
        let lat = v.lattice();
        let cut = lat
            .active_wavenumbers()
            .filter(|&k| v.get(k).norm() > 0.0)
            .map(|k| k[0].abs().max(k[1].abs()))
            .max()
            .unwrap_or(0);
        let w = (2 * cut + 1) as usize;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); w * w];
        for k1 in -cut..=cut {
            for k2 in -cut..=cut {
                coeffs[(k1 + cut) as usize * w + (k2 + cut) as usize] = v.get([k1, k2]);
            }
        }
        Self { cut, scale: lat.wave_scale(), coeffs }
    }

    fn eval(&self, x: [f64; 2]) -> f64 {
        let w = (2 * self.cut + 1) as usize;
        let phase = |t: f64| -> Vec<Complex64> {
            (-self.cut..=self.cut).map(|k| Complex64::from_polar(1.0, self.scale * k as f64 * t)).collect()
        };
        let (e1, e2) = (phase(x[0]), phase(x[1]));
        let mut total = Complex64::new(0.0, 0.0);
        for (i, a) in e1.iter().enumerate() {
            let row = &self.coeffs[i * w..(i + 1) * w];
            let inner: Complex64 = row.iter().zip(&e2).map(|(c, b)| c * b).sum();
            total += a * inner;
        }
        total.re
    }
}

/// Oscillation profile of `v` on balls of radius `r/2` around sampled centers,
/// so every sampled pair in a ball is within distance `r`.  Samples are the
/// points of the oversample-4 grid plus exactly evaluated polar rings, which
/// resolve radii below the grid spacing.
pub fn modulus_of_continuity(v: &SpectralField, radii: &[f64], options: &ModulusOptions) -> Result<ModulusReport> {
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0 && r <= options.r_star)) {
        return Err(Error::invalid(format!("radii must lie in (0, {}]", options.r_star)));
    }
    if !(options.r_star < 1.0) || options.centers == 0 || options.rings == 0 {
        return Err(Error::invalid("need r* < 1, at least one center and one ring"));
    }
    let mut radii = radii.to_vec();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let lat = *v.lattice();
    let side = lat.side_length();
    let grid = to_physical(v, 4)?;
    let m = grid.size();
    let h = side / m as f64;
    let eval = PointEvaluator::new(v);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut osc = vec![0.0f64; radii.len()];
    let r_max = radii[radii.len() - 1] / 2.0;
    for _ in 0..options.centers {
        let c = [rng.gen::<f64>() * side, rng.gen::<f64>() * side];
        // (distance, value) samples within the largest ball.
        let mut samples: Vec<(f64, f64)> = vec![(0.0, eval.eval(c))];
        for &r in &radii {
            let rho = r / 2.0;
            for j in 1..=options.rings {
                let s = rho * j as f64 / options.rings as f64;
                let count = 8 * j;
                for q in 0..count {
                    let th = 2.0 * std::f64::consts::PI * q as f64 / count as f64;
                    samples.push((s, eval.eval([c[0] + s * th.cos(), c[1] + s * th.sin()])));
                }
            }
        }
        let span = (r_max / h).ceil() as i64 + 1;
        let (i0, j0) = ((c[0] / h).round() as i64, (c[1] / h).round() as i64);
        for di in -span..=span {
            for dj in -span..=span {
                let (x, y) = ((i0 + di) as f64 * h, (j0 + dj) as f64 * h);
                let dist = (x - c[0]).hypot(y - c[1]);
                if dist <= r_max {
                    let (gi, gj) = ((i0 + di).rem_euclid(m as i64) as usize, (j0 + dj).rem_euclid(m as i64) as usize);
                    samples.push((dist, grid.get(gi, gj)));
                }
            }
        }
        for (o, &r) in osc.iter_mut().zip(&radii) {
            let lim = r / 2.0 * (1.0 + 1e-12);
            let (lo, hi) = samples
                .iter()
                .filter(|(d, _)| *d <= lim)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, val)| (lo.min(val), hi.max(val)));
            *o = o.max(hi - lo);
        }
    }
    let constant = radii
        .iter()
        .zip(&osc)
        .map(|(r, o)| o * (1.0 / r).ln().sqrt())
        .fold(0.0, f64::max);
    Ok(ModulusReport {
        radii,
        osc,
        constant,
        h1_ratio: None,
        linf: grid.max_abs(),
        centers: options.centers,
        seed: options.seed,
    })
}

/// Modulus report for a solution, with the `H¹` ratio filled in.
pub fn elliptic_report(
    problem: &EllipticProblem,
    v: &SpectralField,
    radii: &[f64],
    options: &ModulusOptions,
) -> Result<ModulusReport> {
    let mut report = modulus_of_continuity(v, radii, options)?;
    report.h1_ratio = Some(energy_bound_check(problem, v));
    Ok(report)
}

/// Dyadic radii `2^{−from}, …, 2^{−to}`.
pub fn dyadic_radii(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|j| 2f64.powi(-j)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random_fields::{random_divergence_free, random_field};

    fn lat(n: usize) -> Lattice {
        Lattice::new(n).unwrap()
    }

    fn cos_x1(lattice: Lattice, m: i32) -> SpectralField {
        SpectralField::from_modes(lattice, &[([m, 0], Complex64::new(0.5, 0.0))]).unwrap()
    }

    fn random_problem(n: usize, amplitude: f64, seed: u64) -> EllipticProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_divergence_free(lat(n), 3.0, &mut rng);
        let f = random_field(lat(n), 4.0, 0.0, &mut rng);
        EllipticProblem::new(b, f, amplitude).unwrap()
    }

    #[test]
    fn laplacian_examples() {
        let b = VelocityField::zeros(lat(16));
        for (m, ratio) in [(1, 1.0), (2, 0.25)] {
            let p = EllipticProblem::new(b.clone(), cos_x1(lat(16), m), 0.0).unwrap();
            let s = solve_stationary(&p, &EllipticOptions::default()).unwrap();
            let mut exact = cos_x1(lat(16), m);
            exact.scale(1.0 / (m * m) as f64);
            assert!(s.v.max_abs_diff(&exact) < 1e-14);
            assert!((energy_bound_check(&p, &s.v) - ratio).abs() < 1e-13);
        }
        let zero = EllipticProblem::new(random_problem(16, 1.0, 1).b().clone(), SpectralField::zeros(lat(16)), 1e3).unwrap();
        let s = solve_stationary(&zero, &EllipticOptions::default()).unwrap();
        assert_eq!(s.v.l2_sq(), 0.0);
    }

    #[test]
    fn rejects_bad_problems() {
        let b = VelocityField::zeros(lat(16));
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 256];
        coeffs[0] = Complex64::new(1.0, 0.0);
        let mean = SpectralField::from_coeffs(lat(16), coeffs).unwrap();
        assert_eq!(EllipticProblem::new(b.clone(), mean, 1.0).unwrap().f().get([0, 0]).norm(), 0.0);
        assert!(EllipticProblem::new(b.clone(), cos_x1(lat(16), 1), -1.0).is_err());
        let mut grad = cos_x1(lat(16), 1).gradient();
        grad.u2 = SpectralField::zeros(lat(16));
        assert!(EllipticProblem::new(grad, cos_x1(lat(16), 1), 1.0).is_err());
        let p = random_problem(16, 1.0, 2);
        let opts = EllipticOptions { tol: 0.0, ..Default::default() };
        assert!(solve_stationary(&p, &opts).is_err());
    }

    #[test]
    fn strong_drift_solves_to_tolerance_and_is_skew() {
        let p = random_problem(32, 1e3, 3);
        let s = solve_stationary(&p, &EllipticOptions::default()).unwrap();
        assert!(s.residual <= 1e-10, "{}", s.residual);
        assert!(relative_residual(&p, &s.v) <= 1e-10);
        assert!(skew_defect(&p, &s.v).unwrap() <= 1e-10);
        assert!(energy_bound_check(&p, &s.v) <= 1.0 + 1e-9);
    }

    #[test]
    fn solution_does_not_depend_on_initial_guess() {
        let p = random_problem(32, 100.0, 4);
        let opts = EllipticOptions::default();
        let a = solve_stationary(&p, &opts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let guess = random_field(lat(32), 10.0, 0.0, &mut rng);
        let b = solve_stationary_from(&p, &opts, Some(&guess)).unwrap();
        let scale = a.v.l2_sq().sqrt();
        assert!(a.v.max_abs_diff(&b.v) <= 10.0 * opts.tol * scale);
    }

    #[test]
    fn short_restarts_still_converge() {
        let p = random_problem(16, 10.0, 5);
        let opts = EllipticOptions { restart: Some(20), ..Default::default() };
        let s = solve_stationary(&p, &opts).unwrap();
        assert!(s.residual <= 1e-10);
    }

    #[test]
    fn pseudo_time_reaches_the_krylov_solution() {
        let p = random_problem(16, 1.0, 6);
        let mut op = Operator::new(&p);
        let s = pseudo_time(&mut op, p.f(), SpectralField::zeros(lat(16)), &EllipticOptions::default(), 0).unwrap();
        assert_eq!(s.method, SolveMethod::PseudoTime);
        let k = solve_stationary(&p, &EllipticOptions::default()).unwrap();
        assert!(s.v.max_abs_diff(&k.v) < 1e-9);
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let p = random_problem(16, 10.0, 7);
        let opts = EllipticOptions { restart: Some(1), max_iterations: 1, pseudo_time_steps: 10, ..Default::default() };
        match solve_stationary(&p, &opts) {
            Err(Error::NotConverged { residual, .. }) => assert!(residual > 1e-10),
            other => panic!("expected non-convergence, got {:?}", other.map(|s| s.residual)),
        }
    }

    #[test]
    fn modulus_of_constant_and_smooth_fields() {
        let radii = dyadic_radii(3, 7);
        let zero = modulus_of_continuity(&SpectralField::zeros(lat(32)), &radii, &ModulusOptions::default()).unwrap();
        assert!(zero.osc.iter().all(|&o| o == 0.0));
        let v = cos_x1(lat(32), 1);
        let rep = modulus_of_continuity(&v, &radii, &ModulusOptions::default()).unwrap();
        for (r, o) in rep.radii.iter().zip(&rep.osc) {
            assert!(*o <= r * (1.0 + 1e-9), "osc({r}) = {o}");
            assert!(*o >= 0.8 * r, "osc({r}) = {o}");
        }
        assert!(rep.osc.windows(2).all(|w| w[0] <= w[1]));
        assert!(rep.constant.is_finite() && rep.constant > 0.0);
        assert!(modulus_of_continuity(&v, &[0.5], &ModulusOptions::default()).is_err());
    }

    #[test]
    fn point_evaluation_matches_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = random_field(lat(16), 6.0, 1.0, &mut rng);
        let g = to_physical(&v, 1).unwrap();
        let e = PointEvaluator::new(&v);
        let h = lat(16).grid_spacing();
        for (i, j) in [(0, 0), (3, 7), (15, 2)] {
            assert!((e.eval([i as f64 * h, j as f64 * h]) - g.get(i, j)).abs() < 1e-12);
        }
    }
}
