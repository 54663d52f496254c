//! Fourier-multiplier operators and the dealiased advection terms.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fft::{split_packed, Transform};
use crate::field::{SpectralField, Velocity, Vorticity2D, C64};
use crate::grid::ModeGrid;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// FFT plans and scratch buffers for one grid; one per thread of execution.
#[derive(Debug)]
pub struct Workspace {
    grid: Arc<ModeGrid>,
    fft: Transform,
    bufs: Vec<Vec<C64>>,
}

impl Workspace {
    pub fn new(grid: Arc<ModeGrid>) -> Self {
        let fft = Transform::new(&grid);
        Workspace {
            grid,
            fft,
            bufs: Vec::new(),
        }
    }

    pub fn grid(&self) -> &Arc<ModeGrid> {
        &self.grid
    }

    fn ensure(&mut self, count: usize) {
        let len = self.grid.len();
        while self.bufs.len() < count {
            self.bufs.push(vec![ZERO; len]);
        }
    }

    fn check(&self, grid: &ModeGrid) -> Result<()> {
        if self.grid.same_shape(grid) {
            Ok(())
        } else {
            Err(Error::Resolution(format!(
                "workspace is {}D/M={} but field is {}D/M={}",
                self.grid.dim(),
                self.grid.m(),
                grid.dim(),
                grid.m()
            )))
        }
    }
}

/// Leray projector `M_ij(n) = δ_ij − n_i n_j / |n|²`.
pub fn leray_project(u: &Velocity) -> Velocity {
    let mut out = u.clone();
    leray_in_place(&mut out);
    out
}

pub fn leray_in_place(u: &mut Velocity) {
    let grid = Arc::clone(u.grid());
    let dim = grid.dim();
    let comps = u.components_mut();
    for &idx in grid.modes() {
        let n = grid.wavevector(idx);
        let k2 = grid.k2(idx);
        let mut dot = ZERO;
        for a in 0..dim {
            dot += comps[a][idx] * n[a] as f64;
        }
        let dot = dot / k2;
        for a in 0..dim {
            comps[a][idx] -= dot * n[a] as f64;
        }
    }
}

/// Velocity from vorticity, `û(n) = i ξ̂(n) (n₂, −n₁) / |n|²`.
pub fn biot_savart(xi: &Vorticity2D) -> Velocity {
    let grid = Arc::clone(xi.grid());
    let mut u = Velocity::zeros(Arc::clone(&grid));
    let c = xi.coeffs();
    let comps = u.components_mut();
    for &idx in grid.modes() {
        let n = grid.wavevector(idx);
        let k2 = grid.k2(idx);
        comps[0][idx] = I * c[idx] * (n[1] as f64 / k2);
        comps[1][idx] = -I * c[idx] * (n[0] as f64 / k2);
    }
    u
}

/// Scalar curl `ξ̂(n) = i (n₁ û₂(n) − n₂ û₁(n))`.
pub fn curl2d(u: &Velocity) -> Vorticity2D {
    let grid = Arc::clone(u.grid());
    assert_eq!(grid.dim(), 2, "curl2d needs a 2D velocity");
    let mut xi = Vorticity2D::zeros(Arc::clone(&grid));
    let comps = u.components();
    let out = xi.coeffs_mut();
    for &idx in grid.modes() {
        let n = grid.wavevector(idx);
        out[idx] = I * (comps[1][idx] * n[0] as f64 - comps[0][idx] * n[1] as f64);
    }
    xi
}

/// Dealiased pseudo-spectral `u·∇ξ` with `u = biot_savart(ξ)`.
pub fn advection_2d(ws: &mut Workspace, xi: &Vorticity2D) -> Result<Vorticity2D> {
    let mut out = Vorticity2D::zeros(Arc::clone(xi.grid()));
    advection_2d_into(ws, xi, &mut out)?;
    Ok(out)
}

pub fn advection_2d_into(ws: &mut Workspace, xi: &Vorticity2D, out: &mut Vorticity2D) -> Result<()> {
    ws.check(xi.grid())?;
    ws.ensure(2);
    let grid = Arc::clone(&ws.grid);
    let c = xi.coeffs();
    {
        let (a, rest) = ws.bufs.split_at_mut(1);
        let (a, b) = (&mut a[0], &mut rest[0]);
        for idx in 0..grid.len() {
            if !grid.is_retained(idx) {
                a[idx] = ZERO;
                b[idx] = ZERO;
                continue;
            }
            let n = grid.wavevector(idx);
            let (n1, n2) = (n[0] as f64, n[1] as f64);
            let k2 = grid.k2(idx);
            let x = c[idx];
            let u1 = I * x * (n2 / k2);
            let u2 = -I * x * (n1 / k2);
            a[idx] = u1 + I * u2;
            b[idx] = I * x * n1 + I * (I * x * n2);
        }
        ws.fft.to_physical(a);
        ws.fft.to_physical(b);
        for (p, q) in a.iter_mut().zip(b.iter()) {
            *p = C64::new(p.re * q.re + p.im * q.im, 0.0);
        }
        ws.fft.to_spectral(a);
    }
    let a = &ws.bufs[0];
    for (idx, o) in out.coeffs_mut().iter_mut().enumerate() {
        *o = if grid.is_retained(idx) { a[idx] } else { ZERO };
    }
    Ok(())
}

/// `max |u|` on the collocation grid for the velocity of `ξ`.
pub fn max_speed_2d(ws: &mut Workspace, xi: &Vorticity2D) -> Result<f64> {
    ws.check(xi.grid())?;
    ws.ensure(1);
    let grid = Arc::clone(&ws.grid);
    let c = xi.coeffs();
    let buf = &mut ws.bufs[0];
    for idx in 0..grid.len() {
        buf[idx] = if grid.is_retained(idx) {
            let n = grid.wavevector(idx);
            let k2 = grid.k2(idx);
            // u1 + i u2 with u = iξ̂ (n2, −n1) / |n|²
            I * c[idx] * (n[1] as f64 / k2) + c[idx] * (n[0] as f64 / k2)
        } else {
            ZERO
        };
    }
    ws.fft.to_physical(buf);
    Ok(buf.iter().fold(0.0f64, |m, z| m.max(z.norm_sqr())).sqrt())
}

/// `max |u|` on the collocation grid.
pub fn max_speed(ws: &mut Workspace, u: &Velocity) -> Result<f64> {
    ws.check(u.grid())?;
    ws.ensure(2);
    let grid = Arc::clone(&ws.grid);
    let comps = u.components();
    let d = grid.dim();
    let (a, rest) = ws.bufs.split_at_mut(1);
    let (a, b) = (&mut a[0], &mut rest[0]);
    for idx in 0..grid.len() {
        let keep = grid.is_retained(idx);
        a[idx] = if keep { comps[0][idx] + I * comps[1][idx] } else { ZERO };
        b[idx] = if keep && d == 3 { comps[2][idx] } else { ZERO };
    }
    ws.fft.to_physical(a);
    if d == 3 {
        ws.fft.to_physical(b);
    }
    let mut best = 0.0f64;
    for (p, q) in a.iter().zip(b.iter()) {
        best = best.max(p.norm_sqr() + if d == 3 { q.re * q.re } else { 0.0 });
    }
    Ok(best.sqrt())
}

/// `B_N(u, v) = P_{≤N} P (u·∇v)`, dealiased. `galerkin = None` keeps every
/// retained mode.
pub fn bilinear_velocity(
    ws: &mut Workspace,
    u: &Velocity,
    v: &Velocity,
    galerkin: Option<f64>,
) -> Result<Velocity> {
    let mut out = Velocity::zeros(Arc::clone(u.grid()));
    bilinear_velocity_into(ws, u, v, galerkin, &mut out)?;
    Ok(out)
}

pub fn bilinear_velocity_into(
    ws: &mut Workspace,
    u: &Velocity,
    v: &Velocity,
    galerkin: Option<f64>,
    out: &mut Velocity,
) -> Result<()> {
    ws.check(u.grid())?;
    ws.check(v.grid())?;
    let grid = Arc::clone(&ws.grid);
    let d = grid.dim();
    let nfields = d + d * d;
    let npacked = nfields.div_ceil(2);
    // packed physical inputs, then two buffers for the split outputs
    ws.ensure(npacked + 2);
    let uc = u.components();
    let vc = v.components();

    let spectral_value = |f: usize, idx: usize| -> C64 {
        if f < d {
            uc[f][idx]
        } else {
            let j = (f - d) / d;
            let k = (f - d) % d;
            I * vc[j][idx] * grid.wavevector(idx)[k] as f64
        }
    };

    for p in 0..npacked {
        let buf = &mut ws.bufs[p];
        for (idx, slot) in buf.iter_mut().enumerate() {
            if !grid.is_retained(idx) {
                *slot = ZERO;
                continue;
            }
            let lo = spectral_value(2 * p, idx);
            let hi = if 2 * p + 1 < nfields {
                spectral_value(2 * p + 1, idx)
            } else {
                ZERO
            };
            *slot = lo + I * hi;
        }
        ws.fft.to_physical(buf);
    }

    // physical field f lives in buffer f/2, real part if f even
    let phys = |bufs: &[Vec<C64>], f: usize, j: usize| -> f64 {
        let z = bufs[f / 2][j];
        if f.is_multiple_of(2) {
            z.re
        } else {
            z.im
        }
    };
    let len = grid.len();
    let mut w = [0.0f64; 3];
    let (inputs, outputs) = ws.bufs.split_at_mut(npacked);
    let (o0, o1) = outputs.split_at_mut(1);
    let (o0, o1) = (&mut o0[0], &mut o1[0]);
    for j in 0..len {
        for (comp, wc) in w.iter_mut().enumerate().take(d) {
            let mut acc = 0.0;
            for k in 0..d {
                acc += phys(inputs, k, j) * phys(inputs, d + comp * d + k, j);
            }
            *wc = acc;
        }
        o0[j] = C64::new(w[0], w[1]);
        if d == 3 {
            o1[j] = C64::new(w[2], 0.0);
        }
    }
    ws.fft.to_spectral(o0);
    let comps = out.components_mut();
    {
        let (c0, rest) = comps.split_at_mut(1);
        split_packed(&grid, o0, &mut c0[0], &mut rest[0]);
    }
    if d == 3 {
        ws.fft.to_spectral(o1);
        comps[2].copy_from_slice(o1);
    }
    let limit = galerkin.map(|n| n * n * (1.0 + 1e-12));
    for c in comps.iter_mut() {
        for (idx, val) in c.iter_mut().enumerate() {
            let keep = grid.is_retained(idx) && limit.is_none_or(|l| grid.k2(idx) <= l);
            if !keep {
                *val = ZERO;
            }
        }
    }
    leray_in_place(out);
    Ok(())
}

/// `λ_n = |n|^{2(1+δ)}` per storage slot (zero at `n = 0`).
pub fn hyperviscous_symbol(grid: &ModeGrid, delta: f64) -> Vec<f64> {
    grid.k2_all()
        .iter()
        .map(|&k2| if k2 > 0.0 { k2.powf(1.0 + delta) } else { 0.0 })
        .collect()
}

/// `e^{−νtL} f` with `L = (−Δ)^{1+δ}`.
pub fn heat_semigroup_apply<F: SpectralField>(f: &F, t: f64, nu: f64, delta: f64) -> F {
    assert!(t >= 0.0, "heat semigroup needs t >= 0");
    let factors: Vec<f64> = hyperviscous_symbol(f.grid(), delta)
        .into_iter()
        .map(|l| (-nu * t * l).exp())
        .collect();
    let mut out = f.clone();
    out.scale_modes(&factors);
    out
}

/// Zero every mode with `|n| > radius`.
pub fn galerkin_project<F: SpectralField>(f: &F, radius: f64) -> F {
    let mut out = f.clone();
    galerkin_in_place(&mut out, radius);
    out
}

pub fn galerkin_in_place<F: SpectralField>(f: &mut F, radius: f64) {
    let grid = Arc::clone(f.grid());
    let limit = radius * radius * (1.0 + 1e-12);
    for c in f.components_mut() {
        for (idx, v) in c.iter_mut().enumerate() {
            if grid.k2(idx) > limit {
                *v = ZERO;
            }
        }
    }
}

/// Synthesize real fields given by spectral arrays on a (possibly finer)
/// evaluation grid and return the pointwise maximum of their Euclidean norm.
fn max_pointwise_norm(grid: &ModeGrid, fields: &[Vec<C64>], m_eval: usize) -> Result<f64> {
    if m_eval < grid.m() {
        return Err(Error::Resolution(format!(
            "evaluation grid {m_eval} is coarser than the field grid {}",
            grid.m()
        )));
    }
    let eval = ModeGrid::with_cutoff(grid.dim(), m_eval, grid.cutoff())?;
    let mut fft = Transform::new(&eval);
    let mut total = vec![0.0f64; eval.len()];
    for pair in fields.chunks(2) {
        let mut buf = vec![ZERO; eval.len()];
        for &idx in grid.modes() {
            let target = eval
                .index_of(grid.wavevector(idx))
                .expect("same cutoff");
            let hi = pair.get(1).map(|f| f[idx]).unwrap_or(ZERO);
            buf[target] = pair[0][idx] + I * hi;
        }
        fft.to_physical(&mut buf);
        for (t, z) in total.iter_mut().zip(&buf) {
            *t += z.re * z.re + if pair.len() > 1 { z.im * z.im } else { 0.0 };
        }
    }
    Ok(total.into_iter().fold(0.0, f64::max).sqrt())
}

/// `max |∇ξ|` over the collocation grid of the field (a lower bound on the
/// true supremum over the torus).
pub fn linf_grad_vorticity(xi: &Vorticity2D) -> f64 {
    linf_grad_vorticity_on(xi, xi.grid().m()).expect("native resolution")
}

/// Same as [`linf_grad_vorticity`] evaluated on an `m_eval`-point grid.
pub fn linf_grad_vorticity_on(xi: &Vorticity2D, m_eval: usize) -> Result<f64> {
    let grid = xi.grid();
    let c = xi.coeffs();
    let grads: Vec<Vec<C64>> = (0..2)
        .map(|k| {
            (0..grid.len())
                .map(|idx| I * c[idx] * grid.wavevector(idx)[k] as f64)
                .collect()
        })
        .collect();
    max_pointwise_norm(grid, &grads, m_eval)
}

/// `max |ξ|` over the collocation grid.
pub fn linf_vorticity(xi: &Vorticity2D) -> f64 {
    max_pointwise_norm(xi.grid(), std::slice::from_ref(&xi.coeffs().to_vec()), xi.grid().m())
        .expect("native resolution")
}

/// `max |u|` over the collocation grid.
pub fn linf_velocity(u: &Velocity) -> f64 {
    max_pointwise_norm(u.grid(), u.components(), u.grid().m()).expect("native resolution")
}
