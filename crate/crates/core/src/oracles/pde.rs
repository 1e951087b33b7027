//! Backward Feynman–Kac equation
//! `∂_t u + b ∂_x u + (σ²/2)∂²_x u − θ V_E u = 0`, `u(T, ·) = f`,
//! integrated from `T` down to 0 by Strang splitting: half a step of the
//! potential factor `exp(−θV_EΔτ/2)`, a Crank–Nicolson step for the
//! drift–diffusion part with central differences, then the second potential
//! half step. The drift–diffusion operator is real, so complex `θ` only
//! enters through the potential factors.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// `u = 0` at `x = ±L`.
    Dirichlet,
    /// `∂_x u = 0` at `x = ±L` (mirror ghost nodes).
    Reflecting,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeGrid {
    pub half_width: f64,
    /// Number of intervals J; nodes are `x_j = −L + 2Lj/J`.
    pub intervals: usize,
    pub dt: f64,
    pub duration: f64,
    pub theta: Complex64,
    pub sigma: f64,
    pub boundary: Boundary,
}

impl PdeGrid {
    pub fn nodes(&self) -> Vec<f64> {
        let h = self.dx();
        (0..=self.intervals).map(|j| -self.half_width + j as f64 * h).collect()
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.intervals as f64
    }

    /// Whether `[−L, L]` holds a tube of the given radius around offsets up to `offset`.
    pub fn covers(&self, radius: f64, offset: f64) -> bool {
        self.half_width >= 2.0 * radius + offset.abs()
    }

    fn steps(&self) -> usize {
        (self.duration / self.dt).round().max(1.0) as usize
    }

    fn validate(&self) -> Result<()> {
        if self.intervals < 64 {
            return Err(Error::Domain(format!("PDE grid needs J ≥ 64 intervals, got {}", self.intervals)));
        }
        for (name, v) in [("half_width", self.half_width), ("dt", self.dt), ("duration", self.duration), ("sigma", self.sigma)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    pub x: Vec<f64>,
    pub u: Vec<Complex64>,
}

impl PdeSolution {
    /// Linear interpolation; `None` outside the grid.
    pub fn value_at(&self, x: f64) -> Option<Complex64> {
        let (a, b) = (self.x[0], self.x[self.x.len() - 1]);
        if x < a || x > b {
            return None;
        }
        let h = self.x[1] - self.x[0];
        let j = (((x - a) / h).floor() as usize).min(self.x.len() - 2);
        let w = (x - self.x[j]) / h;
        Some(self.u[j] * (1.0 - w) + self.u[j + 1] * w)
    }
}

/// Three-band operator `L u_j = lo_j u_{j−1} + di_j u_j + up_j u_{j+1}`.
struct Bands {
    lo: Vec<f64>,
    di: Vec<f64>,
    up: Vec<f64>,
}

fn operator(x: &[f64], dx: f64, sigma: f64, drift: &dyn Fn(f64) -> f64, boundary: Boundary) -> Bands {
    let n = x.len();
    let d = 0.5 * sigma * sigma / (dx * dx);
    let mut bands = Bands { lo: vec![0.0; n], di: vec![0.0; n], up: vec![0.0; n] };
    for j in 0..n {
        let c = drift(x[j]) / (2.0 * dx);
        bands.lo[j] = d - c;
        bands.di[j] = -2.0 * d;
        bands.up[j] = d + c;
    }
    match boundary {
        Boundary::Dirichlet => {
            for j in [0, n - 1] {
                bands.lo[j] = 0.0;
                bands.di[j] = 0.0;
                bands.up[j] = 0.0;
            }
        }
        Boundary::Reflecting => {
            // mirrored ghost node u_{−1} = u_1
            bands.up[0] += bands.lo[0];
            bands.lo[0] = 0.0;
            bands.lo[n - 1] += bands.up[n - 1];
            bands.up[n - 1] = 0.0;
        }
    }
    bands
}

/// One Crank–Nicolson step `(I − hL)u' = (I + hL)u` with `h = Δτ/2`, in place.
fn cn_step(bands: &Bands, h: f64, u: &mut [Complex64], scratch: &mut Vec<f64>) {
    let n = u.len();
    let mut rhs: Vec<Complex64> = (0..n)
        .map(|j| {
            let mut r = u[j] * (1.0 + h * bands.di[j]);
            if j > 0 {
                r += u[j - 1] * (h * bands.lo[j]);
            }
            if j + 1 < n {
                r += u[j + 1] * (h * bands.up[j]);
            }
            r
        })
        .collect();
    // Thomas algorithm on (I − hL)
    scratch.clear();
    scratch.resize(n, 0.0);
    let c = scratch;
    let b0 = 1.0 - h * bands.di[0];
    c[0] = -h * bands.up[0] / b0;
    rhs[0] /= b0;
    for j in 1..n {
        let a = -h * bands.lo[j];
        let m = 1.0 - h * bands.di[j] - a * c[j - 1];
        c[j] = -h * bands.up[j] / m;
        let prev = rhs[j - 1];
        rhs[j] = (rhs[j] - prev * a) / m;
    }
    for j in (0..n - 1).rev() {
        let next = rhs[j + 1];
        rhs[j] -= next * c[j];
    }
    u.copy_from_slice(&rhs);
}

fn check_budget(grid: &PdeGrid, vmax: f64) -> Result<()> {
    if grid.dt * vmax > 0.5 {
        return Err(Error::StepSize(format!("Δt·max|V_E| = {:.3e} exceeds 0.5", grid.dt * vmax)));
    }
    Ok(())
}

/// Solves backward from `u(T, x) = terminal(x)` and returns `u(0, ·)`.
///
/// `potential(t, x)` is `V_E`; `drift(t, x)` is `b_t(x)` (pass `None` for no drift).
pub fn solve_backward_pde(
    grid: &PdeGrid,
    potential: &dyn Fn(f64, f64) -> f64,
    drift: Option<&dyn Fn(f64, f64) -> f64>,
    terminal: &dyn Fn(f64) -> Complex64,
) -> Result<PdeSolution> {
    grid.validate()?;
    let x = grid.nodes();
    let n = x.len();
    let steps = grid.steps();
    let dtau = grid.duration / steps as f64;
    let mut u: Vec<Complex64> = x.iter().map(|&xj| terminal(xj)).collect();
    if grid.boundary == Boundary::Dirichlet {
        u[0] = Complex64::new(0.0, 0.0);
        u[n - 1] = Complex64::new(0.0, 0.0);
    }
    let mut scratch = Vec::new();
    let mut bands = None;
    for s in 0..steps {
        // τ = T − t runs forward; evaluate coefficients at the step midpoint
        let t_mid = grid.duration - (s as f64 + 0.5) * dtau;
        let v: Vec<f64> = x.iter().map(|&xj| potential(t_mid, xj)).collect();
        check_budget(grid, v.iter().fold(0.0, |m, a| m.max(a.abs())))?;
        let half: Vec<Complex64> = v.iter().map(|&vj| (-grid.theta * vj * (0.5 * dtau)).exp()).collect();
        if bands.is_none() || drift.is_some() {
            let b = |xj: f64| drift.map_or(0.0, |f| f(t_mid, xj));
            bands = Some(operator(&x, grid.dx(), grid.sigma, &b, grid.boundary));
        }
        u.iter_mut().zip(&half).for_each(|(a, h)| *a *= h);
        cn_step(bands.as_ref().unwrap(), 0.5 * dtau, &mut u, &mut scratch);
        u.iter_mut().zip(&half).for_each(|(a, h)| *a *= h);
    }
    if u.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("PDE solution is not finite".into()));
    }
    Ok(PdeSolution { x, u })
}

/// Solution on the square `[−L, L]²`, `u[i * (J + 1) + j]` at `(x_i, x_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution2d {
    pub x: Vec<f64>,
    pub u: Vec<Complex64>,
}

impl PdeSolution2d {
    pub fn at_node(&self, i: usize, j: usize) -> Complex64 {
        self.u[i * self.x.len() + j]
    }
}

/// Two-dimensional variant on a square grid with Peaceman–Rachford ADI for
/// the diffusion part (drift-free), same Strang splitting for `V_E`.
pub fn solve_backward_pde_2d(
    grid: &PdeGrid,
    potential: &dyn Fn(f64, f64, f64) -> f64,
    terminal: &dyn Fn(f64, f64) -> Complex64,
) -> Result<PdeSolution2d> {
    grid.validate()?;
    let x = grid.nodes();
    let n = x.len();
    let steps = grid.steps();
    let dtau = grid.duration / steps as f64;
    let zero = |_: f64| 0.0;
    let bands = operator(&x, grid.dx(), grid.sigma, &zero, grid.boundary);
    let mut u: Vec<Complex64> = Vec::with_capacity(n * n);
    for &xi in &x {
        for &xj in &x {
            u.push(terminal(xi, xj));
        }
    }
    let dirichlet = grid.boundary == Boundary::Dirichlet;
    let apply_bc = |u: &mut [Complex64]| {
        if dirichlet {
            for k in 0..n {
                u[k] = Complex64::new(0.0, 0.0);
                u[(n - 1) * n + k] = Complex64::new(0.0, 0.0);
                u[k * n] = Complex64::new(0.0, 0.0);
                u[k * n + n - 1] = Complex64::new(0.0, 0.0);
            }
        }
    };
    apply_bc(&mut u);
    let h = 0.5 * dtau;
    let explicit = |line: &[Complex64]| -> Vec<Complex64> {
        (0..n)
            .map(|j| {
                let mut r = line[j] * (1.0 + h * bands.di[j]);
                if j > 0 {
                    r += line[j - 1] * (h * bands.lo[j]);
                }
                if j + 1 < n {
                    r += line[j + 1] * (h * bands.up[j]);
                }
                r
            })
            .collect()
    };
    // implicit solve of (I − hL) against a prepared right-hand side
    let implicit = |rhs: &mut Vec<Complex64>, scratch: &mut Vec<f64>| {
        scratch.clear();
        scratch.resize(n, 0.0);
        let b0 = 1.0 - h * bands.di[0];
        scratch[0] = -h * bands.up[0] / b0;
        rhs[0] /= b0;
        for j in 1..n {
            let a = -h * bands.lo[j];
            let m = 1.0 - h * bands.di[j] - a * scratch[j - 1];
            scratch[j] = -h * bands.up[j] / m;
            let prev = rhs[j - 1];
            rhs[j] = (rhs[j] - prev * a) / m;
        }
        for j in (0..n - 1).rev() {
            let next = rhs[j + 1];
            rhs[j] -= next * scratch[j];
        }
    };
    let mut scratch = Vec::new();
    for s in 0..steps {
        let t_mid = grid.duration - (s as f64 + 0.5) * dtau;
        let mut vmax = 0.0f64;
        let mut half = Vec::with_capacity(n * n);
        for &xi in &x {
            for &xj in &x {
                let v = potential(t_mid, xi, xj);
                vmax = vmax.max(v.abs());
                half.push((-grid.theta * v * (0.5 * dtau)).exp());
            }
        }
        check_budget(grid, vmax)?;
        u.iter_mut().zip(&half).for_each(|(a, f)| *a *= f);
        // half step: implicit in x (first index), explicit in y
        let mut star = vec![Complex64::new(0.0, 0.0); n * n];
        let rows: Vec<Vec<Complex64>> = (0..n).map(|i| explicit(&u[i * n..(i + 1) * n])).collect();
        for j in 0..n {
            let mut rhs: Vec<Complex64> = (0..n).map(|i| rows[i][j]).collect();
            implicit(&mut rhs, &mut scratch);
            for i in 0..n {
                star[i * n + j] = rhs[i];
            }
        }
        // half step: implicit in y, explicit in x
        let cols: Vec<Vec<Complex64>> = (0..n).map(|j| explicit(&(0..n).map(|i| star[i * n + j]).collect::<Vec<_>>())).collect();
        for i in 0..n {
            let mut rhs: Vec<Complex64> = (0..n).map(|j| cols[j][i]).collect();
            implicit(&mut rhs, &mut scratch);
            u[i * n..(i + 1) * n].copy_from_slice(&rhs);
        }
        apply_bc(&mut u);
        u.iter_mut().zip(&half).for_each(|(a, f)| *a *= f);
    }
    Ok(PdeSolution2d { x, u })
}
