//! Embedded primal-dual interior-point solver.
//!
//! Programs are lowered to the standard form
//!     min c'x + 1/2 x'Px   s.t.   A_eq x = b_eq,  A_k x + s = b_k,
//! with s in a product of the nonnegative orthant and second-order cones
//! (rotated blocks are rotated into plain SOC form). The solver runs a
//! Mehrotra predictor-corrector scheme with Nesterov-Todd scaling; the
//! per-iteration KKT system is reduced to an (n + p) dense system and
//! factored with LU. Everything is sequential floating-point arithmetic,
//! so identical programs produce bit-identical solutions on one platform.

use nalgebra::{DMatrix, DVector};

use super::{ConicProgram, ConicSolution, LinExpr, SolveError, SolveStatus};

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// Static regularization on the reduced KKT blocks.
const STATIC_REG: f64 = 1e-11;
/// Fraction of the distance to the cone boundary taken each step.
const STEP_FRACTION: f64 = 0.99;

struct StandardForm {
    n: usize,
    /// Equality rows.
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    /// Cone rows: nonnegative first, then SOC blocks.
    a_k: DMatrix<f64>,
    b_k: DVector<f64>,
    nonneg: usize,
    soc_dims: Vec<usize>,
    /// Diagonal of P (twice the program's quadratic coefficients), scaled.
    p_diag: DVector<f64>,
    /// Linear objective, scaled.
    c: DVector<f64>,
}

fn expr_into_row(row: &mut [f64], expr: &LinExpr, sign: f64) {
    for &(i, coeff) in &expr.terms {
        row[i] += sign * coeff;
    }
}

/// Lower the program: bounds become nonnegative rows, fixed variables
/// become equalities, rotated cones are rotated into plain SOC blocks,
/// and each row (each block, for cones) is equilibrated to unit scale.
fn lower(program: &ConicProgram) -> StandardForm {
    let n = program.num_vars();
    let mut eq_rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (expr, rhs) in program.eq_rows() {
        let mut row = vec![0.0; n];
        expr_into_row(&mut row, expr, 1.0);
        eq_rows.push((row, rhs - expr.constant));
    }
    for i in 0..n {
        let (lo, hi) = program.bounds(i);
        if lo == hi {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            eq_rows.push((row, lo));
        }
    }

    // Cone rows in s = b - Ax form.
    let mut k_rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let push_nonneg = |expr_row: Vec<f64>, rhs: f64, rows: &mut Vec<(Vec<f64>, f64)>| {
        rows.push((expr_row, rhs));
    };
    for (expr, rhs) in program.le_rows() {
        let mut row = vec![0.0; n];
        expr_into_row(&mut row, expr, 1.0);
        push_nonneg(row, rhs - expr.constant, &mut k_rows);
    }
    for i in 0..n {
        let (lo, hi) = program.bounds(i);
        if lo == hi {
            continue;
        }
        if lo.is_finite() {
            let mut row = vec![0.0; n];
            row[i] = -1.0;
            push_nonneg(row, -lo, &mut k_rows);
        }
        if hi.is_finite() {
            let mut row = vec![0.0; n];
            row[i] = 1.0;
            push_nonneg(row, hi, &mut k_rows);
        }
    }
    let nonneg = k_rows.len();

    // SOC blocks: rows encode s = b - Ax, so member expressions enter with
    // a negated coefficient row and their constant on b.
    let mut soc_dims = Vec::new();
    let push_cone_row = |expr: &LinExpr, rows: &mut Vec<(Vec<f64>, f64)>, scale: f64| {
        let mut row = vec![0.0; n];
        for &(i, coeff) in &expr.terms {
            row[i] -= scale * coeff;
        }
        rows.push((row, scale * expr.constant));
    };
    for block in program.soc_blocks() {
        soc_dims.push(1 + block.x.len());
        push_cone_row(&block.t, &mut k_rows, 1.0);
        for e in &block.x {
            push_cone_row(e, &mut k_rows, 1.0);
        }
    }
    for block in program.rsoc_blocks() {
        // (u, v, w) -> ((u+v)/sqrt2, (u-v)/sqrt2, sqrt2 * w) in SOC form.
        soc_dims.push(2 + block.w.len());
        let mut head = block.u.clone();
        for &(i, c) in &block.v.terms {
            head.push(i, c);
        }
        head.constant += block.v.constant;
        let mut diff = block.u.clone();
        for &(i, c) in &block.v.terms {
            diff.push(i, -c);
        }
        diff.constant -= block.v.constant;
        push_cone_row(&head, &mut k_rows, SQRT_HALF);
        push_cone_row(&diff, &mut k_rows, SQRT_HALF);
        for e in &block.w {
            push_cone_row(e, &mut k_rows, std::f64::consts::SQRT_2);
        }
    }

    // Equilibrate: per-row for equalities and nonnegative rows, one common
    // factor per SOC block (independent row scaling would distort cones).
    let row_scale = |row: &[f64]| -> f64 {
        let m = row.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if m > 0.0 {
            m
        } else {
            1.0
        }
    };
    for (row, rhs) in eq_rows.iter_mut() {
        let s = row_scale(row);
        for v in row.iter_mut() {
            *v /= s;
        }
        *rhs /= s;
    }
    for (row, rhs) in k_rows.iter_mut().take(nonneg) {
        let s = row_scale(row);
        for v in row.iter_mut() {
            *v /= s;
        }
        *rhs /= s;
    }
    let mut offset = nonneg;
    for &dim in &soc_dims {
        let mut s = 0.0f64;
        for (row, _) in k_rows.iter().skip(offset).take(dim) {
            s = s.max(row_scale(row));
        }
        if s > 0.0 {
            for (row, rhs) in k_rows.iter_mut().skip(offset).take(dim) {
                for v in row.iter_mut() {
                    *v /= s;
                }
                *rhs /= s;
            }
        }
        offset += dim;
    }

    // Normalize the objective so argmin is invariant under positive
    // rescaling of the cost.
    let mut c = DVector::from_iterator(n, program.obj_linear().iter().copied());
    let mut p_diag = DVector::from_iterator(n, program.obj_quad_diag().iter().map(|q| 2.0 * q));
    let obj_scale = c
        .iter()
        .chain(p_diag.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-12);
    c /= obj_scale;
    p_diag /= obj_scale;

    let p = eq_rows.len();
    let mk = k_rows.len();
    let mut a_eq = DMatrix::zeros(p, n);
    let mut b_eq = DVector::zeros(p);
    for (j, (row, rhs)) in eq_rows.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            a_eq[(j, i)] = v;
        }
        b_eq[j] = *rhs;
    }
    let mut a_k = DMatrix::zeros(mk, n);
    let mut b_k = DVector::zeros(mk);
    for (j, (row, rhs)) in k_rows.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            a_k[(j, i)] = v;
        }
        b_k[j] = *rhs;
    }
    StandardForm { n, a_eq, b_eq, a_k, b_k, nonneg, soc_dims, p_diag, c }
}

/// Nesterov-Todd scaling state for the cone rows.
struct Scaling {
    /// sqrt(s_i/z_i) per nonnegative row.
    w_nonneg: Vec<f64>,
    /// Per SOC block: (eta, normalized NT point w-bar).
    soc: Vec<(f64, DVector<f64>)>,
    /// Scaled point lambda = W z = W^{-1} s.
    lambda: DVector<f64>,
}

fn jmul(v: &DVector<f64>) -> DVector<f64> {
    let mut out = -v.clone();
    out[0] = v[0];
    out
}

/// W-bar times v via the rank-one structure of the NT matrix.
fn wbar_mul(w: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let d = v.len();
    let mut out = DVector::zeros(d);
    let dot_tail: f64 = (1..d).map(|i| w[i] * v[i]).sum();
    out[0] = w[0] * v[0] + dot_tail;
    let coeff = v[0] + dot_tail / (1.0 + w[0]);
    for i in 1..d {
        out[i] = v[i] + coeff * w[i];
    }
    out
}

fn soc_residual(v: &[f64]) -> f64 {
    let tail: f64 = v[1..].iter().map(|x| x * x).sum();
    v[0] * v[0] - tail
}

impl Scaling {
    fn compute(form: &StandardForm, s: &DVector<f64>, z: &DVector<f64>) -> Option<Scaling> {
        let nn = form.nonneg;
        let mut w_nonneg = Vec::with_capacity(nn);
        let mut lambda = DVector::zeros(s.len());
        for i in 0..nn {
            if s[i] <= 0.0 || z[i] <= 0.0 {
                return None;
            }
            w_nonneg.push((s[i] / z[i]).sqrt());
            lambda[i] = (s[i] * z[i]).sqrt();
        }
        let mut soc = Vec::with_capacity(form.soc_dims.len());
        let mut off = nn;
        for &dim in &form.soc_dims {
            let sv = s.rows(off, dim).into_owned();
            let zv = z.rows(off, dim).into_owned();
            let rs = soc_residual(sv.as_slice());
            let rz = soc_residual(zv.as_slice());
            if rs <= 0.0 || rz <= 0.0 || sv[0] <= 0.0 || zv[0] <= 0.0 {
                return None;
            }
            let zeta_s = rs.sqrt();
            let zeta_z = rz.sqrt();
            let sn = &sv / zeta_s;
            let zn = &zv / zeta_z;
            let gamma = ((1.0 + sn.dot(&zn)) / 2.0).sqrt();
            let mut w = (&sn + jmul(&zn)) / (2.0 * gamma);
            // Guard the normalization w'Jw = 1 against roundoff.
            let wres = soc_residual(w.as_slice());
            if wres <= 0.0 {
                return None;
            }
            w /= wres.sqrt();
            let eta = (zeta_s / zeta_z).sqrt();
            // lambda = W z = eta * W-bar z.
            let lam = wbar_mul(&w, &zv) * eta;
            if std::env::var_os("HECC_IPM_TRACE").is_some() {
                let det = soc_residual(lam.as_slice());
                if !det.is_finite() || det <= 0.0 || !lam[0].is_finite() {
                    eprintln!(
                        "         scaling block off={off}: zeta_s={zeta_s:.3e} zeta_z={zeta_z:.3e} gamma={gamma:.3e} eta={eta:.3e} det_lam={det:.3e} s={:?} z={:?}",
                        sv.as_slice(), zv.as_slice()
                    );
                }
            }
            for i in 0..dim {
                lambda[off + i] = lam[i];
            }
            soc.push((eta, w));
            off += dim;
        }
        Some(Scaling { w_nonneg, soc, lambda })
    }

    /// W v (symmetric scaling).
    fn w_mul(&self, form: &StandardForm, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for i in 0..form.nonneg {
            out[i] = self.w_nonneg[i] * v[i];
        }
        let mut off = form.nonneg;
        for (b, &dim) in form.soc_dims.iter().enumerate() {
            let (eta, w) = &self.soc[b];
            let block = v.rows(off, dim).into_owned();
            let res = wbar_mul(w, &block) * *eta;
            for i in 0..dim {
                out[off + i] = res[i];
            }
            off += dim;
        }
        out
    }

    /// W^{-1} v.
    fn w_inv_mul(&self, form: &StandardForm, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for i in 0..form.nonneg {
            out[i] = v[i] / self.w_nonneg[i];
        }
        let mut off = form.nonneg;
        for (b, &dim) in form.soc_dims.iter().enumerate() {
            let (eta, w) = &self.soc[b];
            let block = v.rows(off, dim).into_owned();
            // W-bar^{-1} = J W-bar J.
            let res = jmul(&wbar_mul(w, &jmul(&block))) / *eta;
            for i in 0..dim {
                out[off + i] = res[i];
            }
            off += dim;
        }
        out
    }

    /// H v with H = W'W.
    fn h_mul(&self, form: &StandardForm, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for i in 0..form.nonneg {
            out[i] = v[i] * self.w_nonneg[i] * self.w_nonneg[i];
        }
        let mut off = form.nonneg;
        for (b, &dim) in form.soc_dims.iter().enumerate() {
            let (eta, w) = &self.soc[b];
            let block = v.rows(off, dim).into_owned();
            // W-bar^2 = 2 w w' - J.
            let dot = w.dot(&block);
            let mut res = jmul(&block);
            res = -res;
            for i in 0..dim {
                res[i] += 2.0 * dot * w[i];
            }
            res *= eta * eta;
            for i in 0..dim {
                out[off + i] = res[i];
            }
            off += dim;
        }
        out
    }

    /// H^{-1} applied to every column of a matrix, block-wise in place.
    fn h_inv_mul_matrix(&self, form: &StandardForm, m: &mut DMatrix<f64>) {
        let ncols = m.ncols();
        for i in 0..form.nonneg {
            let scale = 1.0 / (self.w_nonneg[i] * self.w_nonneg[i]);
            for j in 0..ncols {
                m[(i, j)] *= scale;
            }
        }
        let mut off = form.nonneg;
        for (b, &dim) in form.soc_dims.iter().enumerate() {
            let (eta, w) = &self.soc[b];
            let inv_eta2 = 1.0 / (eta * eta);
            // (W-bar^2)^{-1} = 2 (Jw)(Jw)' - J applied to the block rows.
            for j in 0..ncols {
                let mut dot = w[0] * m[(off, j)];
                for i in 1..dim {
                    dot -= w[i] * m[(off + i, j)];
                }
                let head = m[(off, j)];
                m[(off, j)] = (2.0 * dot * w[0] - head) * inv_eta2;
                for i in 1..dim {
                    m[(off + i, j)] = (-2.0 * dot * w[i] + m[(off + i, j)]) * inv_eta2;
                }
            }
            off += dim;
        }
    }

    /// H^{-1} v with H = W'W.
    fn h_inv_mul(&self, form: &StandardForm, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for i in 0..form.nonneg {
            out[i] = v[i] / (self.w_nonneg[i] * self.w_nonneg[i]);
        }
        let mut off = form.nonneg;
        for (b, &dim) in form.soc_dims.iter().enumerate() {
            let (eta, w) = &self.soc[b];
            let block = v.rows(off, dim).into_owned();
            // (W-bar^2)^{-1} = 2 (Jw)(Jw)' - J.
            let jw = jmul(w);
            let dot = jw.dot(&block);
            let mut res = jmul(&block);
            res = -res;
            for i in 0..dim {
                res[i] += 2.0 * dot * jw[i];
            }
            res /= eta * eta;
            for i in 0..dim {
                out[off + i] = res[i];
            }
            off += dim;
        }
        out
    }
}

/// Jordan product u o v per cone.
fn jordan_mul(form: &StandardForm, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(u.len());
    for i in 0..form.nonneg {
        out[i] = u[i] * v[i];
    }
    let mut off = form.nonneg;
    for &dim in &form.soc_dims {
        let ub = u.rows(off, dim);
        let vb = v.rows(off, dim);
        out[off] = ub.dot(&vb);
        for i in 1..dim {
            out[off + i] = ub[0] * vb[i] + vb[0] * ub[i];
        }
        off += dim;
    }
    out
}

/// Jordan division lambda \ d (solve lambda o x = d).
fn jordan_div(form: &StandardForm, lambda: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(d.len());
    for i in 0..form.nonneg {
        out[i] = d[i] / lambda[i];
    }
    let mut off = form.nonneg;
    for &dim in &form.soc_dims {
        let l = lambda.rows(off, dim).into_owned();
        let db = d.rows(off, dim).into_owned();
        let det = soc_residual(l.as_slice());
        let tail_dot: f64 = (1..dim).map(|i| l[i] * db[i]).sum();
        let x0 = (l[0] * db[0] - tail_dot) / det;
        out[off] = x0;
        for i in 1..dim {
            out[off + i] = (db[i] - x0 * l[i]) / l[0];
        }
        off += dim;
    }
    out
}

/// Cone identity element.
fn cone_identity(form: &StandardForm) -> DVector<f64> {
    let mut e = DVector::zeros(form.a_k.nrows());
    for i in 0..form.nonneg {
        e[i] = 1.0;
    }
    let mut off = form.nonneg;
    for &dim in &form.soc_dims {
        e[off] = 1.0;
        off += dim;
    }
    e
}

/// Degree of the cone barrier (nonneg rows + one per SOC block).
fn cone_degree(form: &StandardForm) -> f64 {
    (form.nonneg + form.soc_dims.len()) as f64
}

/// Largest alpha in (0, 1] keeping v + alpha * dv in the cone interior
/// fraction; returns the unclamped boundary distance.
fn max_step(form: &StandardForm, v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..form.nonneg {
        if dv[i] < 0.0 {
            alpha = alpha.min(-v[i] / dv[i]);
        }
    }
    let mut off = form.nonneg;
    for &dim in &form.soc_dims {
        let vb = v.rows(off, dim).into_owned();
        let db = dv.rows(off, dim).into_owned();
        // Roots of (v0 + a d0)^2 - |v1 + a d1|^2 = 0.
        let a = soc_residual(db.as_slice());
        let tail: f64 = (1..dim).map(|i| vb[i] * db[i]).sum();
        let b = 2.0 * (vb[0] * db[0] - tail);
        let c = soc_residual(vb.as_slice());
        let mut block_alpha = f64::INFINITY;
        let disc = b * b - 4.0 * a * c;
        if a.abs() < 1e-300 {
            if b < 0.0 {
                block_alpha = block_alpha.min(-c / b);
            }
        } else if disc >= 0.0 {
            let sq = disc.sqrt();
            for root in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                if root > 0.0 {
                    block_alpha = block_alpha.min(root);
                }
            }
        }
        if db[0] < 0.0 {
            block_alpha = block_alpha.min(-vb[0] / db[0]);
        }
        alpha = alpha.min(block_alpha);
        off += dim;
    }
    alpha
}

struct KktFactor {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    matrix: DMatrix<f64>,
    n: usize,
    p: usize,
}

impl KktFactor {
    /// LU solve with two rounds of iterative refinement; recovers the
    /// digits lost to regularization and near-boundary ill-conditioning.
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut sol = match self.lu.solve(rhs) {
            Some(s) => s,
            None => return DVector::zeros(rhs.len()),
        };
        for _ in 0..2 {
            let residual = rhs - &self.matrix * &sol;
            if residual.amax() <= 1e-14 * rhs.amax().max(1.0) {
                break;
            }
            if let Some(corr) = self.lu.solve(&residual) {
                sol += corr;
            } else {
                break;
            }
        }
        sol
    }
}

/// Factor the reduced KKT matrix [[P + A_k' H^{-1} A_k, A_eq'], [A_eq, -delta I]].
fn factor_kkt(form: &StandardForm, scaling: Option<&Scaling>) -> KktFactor {
    let n = form.n;
    let p = form.a_eq.nrows();
    let mk = form.a_k.nrows();
    let mut m = DMatrix::zeros(n + p, n + p);
    if mk > 0 {
        let mut hinv_a = form.a_k.clone();
        if let Some(sc) = scaling {
            sc.h_inv_mul_matrix(form, &mut hinv_a);
        }
        let ata = form.a_k.transpose() * hinv_a;
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = ata[(i, j)];
            }
        }
    }
    for i in 0..n {
        m[(i, i)] += form.p_diag[i] + STATIC_REG;
    }
    for r in 0..p {
        for i in 0..n {
            m[(n + r, i)] = form.a_eq[(r, i)];
            m[(i, n + r)] = form.a_eq[(r, i)];
        }
        m[(n + r, n + r)] = -STATIC_REG;
    }
    KktFactor { lu: m.clone().lu(), matrix: m, n, p }
}

/// Solve for (dx, dy, dz) in the block system
///   P dx + A_eq' dy + A_k' dz = rhs_x
///   A_eq dx                   = rhs_y
///   A_k dx - H dz             = -g
/// by eliminating dz = H^{-1}(A_k dx + g).
fn solve_kkt(
    factor: &KktFactor,
    form: &StandardForm,
    scaling: Option<&Scaling>,
    rhs_x: &DVector<f64>,
    rhs_y: &DVector<f64>,
    g: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let n = factor.n;
    let p = factor.p;
    let mk = form.a_k.nrows();
    let mut rhs = DVector::zeros(n + p);
    let extra = if mk > 0 {
        let h_g = match scaling {
            Some(sc) => sc.h_inv_mul(form, g),
            None => g.clone(),
        };
        form.a_k.transpose() * h_g
    } else {
        DVector::zeros(n)
    };
    for i in 0..n {
        rhs[i] = rhs_x[i] - extra[i];
    }
    for r in 0..p {
        rhs[n + r] = rhs_y[r];
    }
    let sol = factor.solve(&rhs);
    let dx = sol.rows(0, n).into_owned();
    let dy = sol.rows(n, p).into_owned();
    let dz = if mk > 0 {
        let v = &form.a_k * &dx + g;
        match scaling {
            Some(sc) => sc.h_inv_mul(form, &v),
            None => v,
        }
    } else {
        DVector::zeros(0)
    };
    (dx, dy, dz)
}

/// One solve of the full three-block system followed by refinement rounds
/// measured against the unreduced equations; the elimination through
/// H^{-1} otherwise costs dual accuracy once the barrier is small.
fn solve_kkt_refined(
    factor: &KktFactor,
    form: &StandardForm,
    scaling: Option<&Scaling>,
    rhs_x: &DVector<f64>,
    rhs_y: &DVector<f64>,
    g: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let (mut dx, mut dy, mut dz) = solve_kkt(factor, form, scaling, rhs_x, rhs_y, g);
    let n = factor.n;
    let p = factor.p;
    for _ in 0..2 {
        let mut r1 = rhs_x.clone();
        for i in 0..n {
            r1[i] -= form.p_diag[i] * dx[i];
        }
        if p > 0 {
            r1 -= form.a_eq.transpose() * &dy;
        }
        r1 -= form.a_k.transpose() * &dz;
        let r2 = if p > 0 {
            rhs_y - &form.a_eq * &dx
        } else {
            DVector::zeros(0)
        };
        let h_dz = match scaling {
            Some(sc) => sc.h_mul(form, &dz),
            None => dz.clone(),
        };
        let r3 = -g - (&form.a_k * &dx - h_dz);
        let err = r1.amax().max(r3.amax()).max(if p > 0 { r2.amax() } else { 0.0 });
        if err <= 1e-13 * (rhs_x.amax().max(g.amax()).max(1.0)) {
            break;
        }
        let (cx, cy, cz) = solve_kkt(factor, form, scaling, &r1, &r2, &(-r3));
        dx += cx;
        if p > 0 {
            dy += cy;
        }
        dz += cz;
    }
    (dx, dy, dz)
}

/// Bring a candidate point into the cone interior by shifting along the
/// identity element until every part has margin at least one.
fn to_interior(form: &StandardForm, v: &mut DVector<f64>) {
    let mut margin = f64::INFINITY;
    for i in 0..form.nonneg {
        margin = margin.min(v[i]);
    }
    let mut off = form.nonneg;
    for &dim in &form.soc_dims {
        let tail: f64 = (1..dim).map(|i| v[off + i] * v[off + i]).sum::<f64>().sqrt();
        margin = margin.min(v[off] - tail);
        off += dim;
    }
    if !margin.is_finite() || margin < 1.0 {
        let shift = if margin.is_finite() { 1.0 - margin } else { 1.0 };
        let e = cone_identity(form);
        *v += e * shift;
    }
}

pub fn solve(
    program: &ConicProgram,
    tolerance: f64,
    max_iterations: usize,
) -> Result<ConicSolution, SolveError> {
    program.validate().map_err(SolveError::Malformed)?;
    let form = lower(program);
    let n = form.n;
    let p = form.a_eq.nrows();
    let mk = form.a_k.nrows();

    // Pure (quadratic) programs with only equality rows solve in one shot.
    if mk == 0 {
        let factor = factor_kkt(&form, None);
        let rhs_x = -form.c.clone();
        let rhs_y = form.b_eq.clone();
        let (x, y, _) = solve_kkt(&factor, &form, None, &rhs_x, &rhs_y, &DVector::zeros(0));
        let pres = if p > 0 {
            (&form.a_eq * &x - &form.b_eq).amax()
        } else {
            0.0
        };
        let grad = {
            let mut g = form.c.clone();
            for i in 0..n {
                g[i] += form.p_diag[i] * x[i];
            }
            if p > 0 {
                g += form.a_eq.transpose() * &y;
            }
            g.amax()
        };
        let status = if pres <= tolerance.max(1e-9) && grad <= (tolerance * 1e2).max(1e-6) {
            SolveStatus::Optimal
        } else {
            SolveStatus::IterationLimit
        };
        let primal: Vec<f64> = x.iter().copied().collect();
        return Ok(ConicSolution {
            objective: program.objective_value(&primal),
            primal,
            status,
            max_primal_residual: pres,
            max_dual_residual: grad,
            iterations: 1,
        });
    }

    let bnorm = form.b_k.amax().max(if p > 0 { form.b_eq.amax() } else { 0.0 }).max(1.0);
    let cnorm = form.c.amax().max(1.0);
    let degree = cone_degree(&form);

    let mut x = DVector::zeros(n);
    let y = DVector::zeros(p);
    let mut s = {
        let mut s0 = form.b_k.clone();
        to_interior(&form, &mut s0);
        s0
    };
    let z = cone_identity(&form);
    {
        // Least-squares warm point for the primal only; kept when tame,
        // otherwise the cold start above stands.
        let factor = factor_kkt(&form, None);
        let rhs_x = -form.c.clone();
        let rhs_y = form.b_eq.clone();
        let rtz = -form.b_k.clone();
        let (x0, _y0, _z0) = solve_kkt(&factor, &form, None, &rhs_x, &rhs_y, &rtz);
        let b_scale = 1.0 + form.b_k.amax().max(if p > 0 { form.b_eq.amax() } else { 0.0 });
        if x0.iter().all(|v| v.is_finite()) && x0.amax() <= 1e2 * b_scale {
            x = x0;
            let mut s0 = &form.b_k - &form.a_k * &x;
            to_interior(&form, &mut s0);
            s = s0;
        }
    }
    let mut y = y;
    let mut z = z;

    let mut best: Option<(f64, ConicSolution)> = None;
    let mut iterations = 0;
    for iter in 0..max_iterations {
        iterations = iter + 1;
        // Residuals.
        let mut rx = form.c.clone();
        for i in 0..n {
            rx[i] += form.p_diag[i] * x[i];
        }
        if p > 0 {
            rx += form.a_eq.transpose() * &y;
        }
        rx += form.a_k.transpose() * &z;
        let ry = if p > 0 {
            &form.a_eq * &x - &form.b_eq
        } else {
            DVector::zeros(0)
        };
        let rz = &form.a_k * &x + &s - &form.b_k;

        let gap = s.dot(&z);
        let pobj = form.c.dot(&x)
            + 0.5 * (0..n).map(|i| form.p_diag[i] * x[i] * x[i]).sum::<f64>();
        let pres = rz.amax().max(if p > 0 { ry.amax() } else { 0.0 }) / bnorm;
        let dres = rx.amax() / cnorm;
        let relgap = gap.abs() / pobj.abs().max(1.0);

        let make_solution = |status: SolveStatus| -> ConicSolution {
            let primal: Vec<f64> = x.iter().copied().collect();
            ConicSolution {
                objective: program.objective_value(&primal),
                primal,
                status,
                max_primal_residual: pres,
                max_dual_residual: dres,
                iterations: iter,
            }
        };

        if std::env::var_os("HECC_IPM_TRACE").is_some() {
            eprintln!(
                "iter {iter:3} pres={pres:9.2e} dres={dres:9.2e} gap={gap:9.2e} relgap={relgap:9.2e} pobj={pobj:12.5e}"
            );
        }

        let score = pres.max(dres).max(relgap);
        if best.as_ref().map_or(true, |(bs, _)| score < *bs) {
            best = Some((score, make_solution(SolveStatus::IterationLimit)));
        }

        if pres <= tolerance && dres <= tolerance && relgap <= tolerance {
            return Ok(make_solution(SolveStatus::Optimal));
        }

        // Primal infeasibility certificate: A'(y,z) ~ 0 with b'(y,z) < 0.
        let dual_norm = z.amax().max(if p > 0 { y.amax() } else { 0.0 });
        if dual_norm > 1.0 {
            let mut atyz = form.a_k.transpose() * &z;
            if p > 0 {
                atyz += form.a_eq.transpose() * &y;
            }
            let byz = form.b_k.dot(&z) + if p > 0 { form.b_eq.dot(&y) } else { 0.0 };
            if atyz.amax() / dual_norm <= tolerance.max(1e-10) * 10.0
                && byz / dual_norm < -tolerance.max(1e-10) * 10.0
            {
                return Ok(make_solution(SolveStatus::Infeasible));
            }
        }
        // Unboundedness heuristic: primal ray.
        if x.amax() > 1e11 * bnorm && pobj < -1e10 {
            return Ok(make_solution(SolveStatus::Unbounded));
        }

        let scaling = match Scaling::compute(&form, &s, &z) {
            Some(sc) => sc,
            None => break,
        };
        let mu = gap / degree;
        let factor = factor_kkt(&form, Some(&scaling));

        // Affine predictor: d = -lambda o lambda. The cone row becomes
        // A_k dx - H dz = -rz - W(lambda \ d), i.e. g = rz + W(lambda \ d).
        let lam_sq = jordan_mul(&form, &scaling.lambda, &scaling.lambda);
        let d_aff = -lam_sq.clone();
        let wld = scaling.w_mul(&form, &jordan_div(&form, &scaling.lambda, &d_aff));
        if std::env::var_os("HECC_IPM_TRACE").is_some() {
            for (i, v) in scaling.lambda.iter().enumerate() {
                if !v.is_finite() {
                    eprintln!("         lambda[{i}] = {v} (s={}, z={})", s[i], z[i]);
                    break;
                }
            }
            let dv = jordan_div(&form, &scaling.lambda, &d_aff);
            for (i, v) in dv.iter().enumerate() {
                if !v.is_finite() {
                    eprintln!("         jordan_div[{i}] = {v} lambda={} d={}", scaling.lambda[i], d_aff[i]);
                    let mut off = form.nonneg;
                    for &dim in &form.soc_dims {
                        if i >= off && i < off + dim {
                            let l = scaling.lambda.rows(off, dim).into_owned();
                            let det = soc_residual(l.as_slice());
                            eprintln!("         block off={off} dim={dim} lambda={:?} det={det:.3e} s={:?} z={:?}",
                                l.as_slice(), s.rows(off,dim).as_slice(), z.rows(off,dim).as_slice());
                        }
                        off += dim;
                    }
                    break;
                }
            }
            for (i, v) in wld.iter().enumerate() {
                if !v.is_finite() {
                    eprintln!("         wld[{i}] = {v}");
                    break;
                }
            }
        }
        let g_aff = &rz + &wld;
        let (dx_a, _dy_a, dz_a) =
            solve_kkt_refined(&factor, &form, Some(&scaling), &(-rx.clone()), &(-ry.clone()), &g_aff);
        let ds_a = -(&rz) - &form.a_k * &dx_a;
        if std::env::var_os("HECC_IPM_TRACE").is_some() {
            eprintln!(
                "         aff: |lam|={:9.2e} |wld|={:9.2e} |g|={:9.2e} |dx_a|={:9.2e} |dz_a|={:9.2e} |ds_a|={:9.2e}",
                scaling.lambda.amax(), wld.amax(), g_aff.amax(), dx_a.amax(), dz_a.amax(), ds_a.amax()
            );
        }

        let alpha_aff = max_step(&form, &s, &ds_a)
            .min(max_step(&form, &z, &dz_a))
            .min(1.0);
        let s_aff = &s + &ds_a * alpha_aff;
        let z_aff = &z + &dz_a * alpha_aff;
        let mu_aff = s_aff.dot(&z_aff) / degree;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Combined corrector step.
        let ws = scaling.w_inv_mul(&form, &ds_a);
        let wz = scaling.w_mul(&form, &dz_a);
        let correction = jordan_mul(&form, &ws, &wz);
        let mut d = -lam_sq - correction;
        let e = cone_identity(&form);
        d += e * (sigma * mu);
        let wld = scaling.w_mul(&form, &jordan_div(&form, &scaling.lambda, &d));
        let g_comb = &rz + &wld;
        let (dx, dy, dz) =
            solve_kkt_refined(&factor, &form, Some(&scaling), &(-rx.clone()), &(-ry.clone()), &g_comb);
        let ds = -(&rz) - &form.a_k * &dx;

        let alpha = (STEP_FRACTION
            * max_step(&form, &s, &ds).min(max_step(&form, &z, &dz)))
        .min(1.0);
        if std::env::var_os("HECC_IPM_TRACE").is_some() {
            eprintln!(
                "         alpha_aff={alpha_aff:9.2e} sigma={sigma:9.2e} alpha={alpha:9.2e} |dx|={:9.2e} |x|={:9.2e} |z|={:9.2e}",
                dx.amax(), x.amax(), z.amax()
            );
        }
        if !alpha.is_finite()
            || alpha <= 1e-14
            || dx.iter().any(|v| !v.is_finite())
            || dz.iter().any(|v| !v.is_finite())
        {
            break;
        }
        x += &dx * alpha;
        if p > 0 {
            y += &dy * alpha;
        }
        s += &ds * alpha;
        z += &dz * alpha;
        if x.iter().any(|v| !v.is_finite()) {
            break;
        }
    }

    let mut out = best
        .map(|(_, sol)| sol)
        .expect("at least one iterate recorded");
    out.iterations = iterations;
    Ok(out)
}
