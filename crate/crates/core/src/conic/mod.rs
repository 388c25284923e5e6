//! Language-neutral convex subproblem representation and solver contract.
//!
//! Programs carry a linear objective with optional diagonal convex
//! quadratic terms, box bounds, linear equality/inequality rows, and
//! second-order / rotated second-order cone blocks over affine
//! expressions. Reciprocal and quadratic-over-linear constraints arriving
//! from the SCA loops must already be cone-encoded; no reformulation
//! happens here. Solving is deterministic: the same program yields the
//! same solution vector bit for bit on one platform.

mod solver;

pub use solver::solve;

/// Default solver tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default interior-point iteration cap.
pub const DEFAULT_MAX_ITER: usize = 200;

/// Affine expression over program variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        LinExpr::default()
    }

    pub fn var(index: usize) -> Self {
        LinExpr { terms: vec![(index, 1.0)], constant: 0.0 }
    }

    pub fn term(index: usize, coeff: f64) -> Self {
        LinExpr { terms: vec![(index, coeff)], constant: 0.0 }
    }

    pub fn constant(value: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: value }
    }

    pub fn push(&mut self, index: usize, coeff: f64) {
        if coeff != 0.0 {
            self.terms.push((index, coeff));
        }
    }

    pub fn plus(mut self, index: usize, coeff: f64) -> Self {
        self.push(index, coeff);
        self
    }

    pub fn offset(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>()
    }

    fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|&(i, _)| i).max()
    }
}

impl std::fmt::Display for LinExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut first = true;
        for &(i, c) in &self.terms {
            if first {
                write!(f, "{c}*x{i}")?;
                first = false;
            } else if c < 0.0 {
                write!(f, " - {}*x{i}", -c)?;
            } else {
                write!(f, " + {c}*x{i}")?;
            }
        }
        if self.constant != 0.0 || first {
            if first {
                write!(f, "{}", self.constant)?;
            } else if self.constant < 0.0 {
                write!(f, " - {}", -self.constant)?;
            } else {
                write!(f, " + {}", self.constant)?;
            }
        }
        Ok(())
    }
}

/// ||x|| <= t over affine expressions.
#[derive(Debug, Clone)]
pub struct SocBlock {
    pub t: LinExpr,
    pub x: Vec<LinExpr>,
}

/// u * v >= sum w_i^2 with u, v >= 0, over affine expressions.
#[derive(Debug, Clone)]
pub struct RsocBlock {
    pub u: LinExpr,
    pub v: LinExpr,
    pub w: Vec<LinExpr>,
}

#[derive(Debug, Clone)]
pub struct ConicProgram {
    lower: Vec<f64>,
    upper: Vec<f64>,
    obj_linear: Vec<f64>,
    obj_quad_diag: Vec<f64>,
    obj_constant: f64,
    eq_rows: Vec<(LinExpr, f64)>,
    le_rows: Vec<(LinExpr, f64)>,
    soc_blocks: Vec<SocBlock>,
    rsoc_blocks: Vec<RsocBlock>,
    names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProgramError {
    UndeclaredVariable { index: usize, vars: usize },
    NegativeQuadratic { index: usize, coeff: f64 },
    EmptyBounds { index: usize },
    NonFinite(String),
}

impl std::fmt::Display for ProgramError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProgramError::UndeclaredVariable { index, vars } => {
                write!(f, "constraint references x{index} but only {vars} variables are declared")
            }
            ProgramError::NegativeQuadratic { index, coeff } => {
                write!(f, "quadratic coefficient {coeff} on x{index} is not PSD")
            }
            ProgramError::EmptyBounds { index } => write!(f, "empty bound interval on x{index}"),
            ProgramError::NonFinite(what) => write!(f, "non-finite data in {what}"),
        }
    }
}

impl std::error::Error for ProgramError {}

impl Default for ConicProgram {
    fn default() -> Self {
        Self::new()
    }
}

impl ConicProgram {
    pub fn new() -> Self {
        ConicProgram {
            lower: Vec::new(),
            upper: Vec::new(),
            obj_linear: Vec::new(),
            obj_quad_diag: Vec::new(),
            obj_constant: 0.0,
            eq_rows: Vec::new(),
            le_rows: Vec::new(),
            soc_blocks: Vec::new(),
            rsoc_blocks: Vec::new(),
            names: Vec::new(),
        }
    }

    /// Declare a variable with box bounds (use infinities for free sides).
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.lower.push(lower);
        self.upper.push(upper);
        self.obj_linear.push(0.0);
        self.obj_quad_diag.push(0.0);
        self.names.push(name.into());
        self.names.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn bounds(&self, index: usize) -> (f64, f64) {
        (self.lower[index], self.upper[index])
    }

    /// Pin a variable to a fixed value.
    pub fn fix_var(&mut self, index: usize, value: f64) {
        self.lower[index] = value;
        self.upper[index] = value;
    }

    /// Accumulate a linear objective coefficient.
    pub fn add_linear_obj(&mut self, index: usize, coeff: f64) {
        self.obj_linear[index] += coeff;
    }

    /// Accumulate a diagonal quadratic objective term coeff * x_i^2.
    pub fn add_quadratic_obj(&mut self, index: usize, coeff: f64) {
        self.obj_quad_diag[index] += coeff;
    }

    pub fn add_constant_obj(&mut self, value: f64) {
        self.obj_constant += value;
    }

    pub fn add_eq(&mut self, expr: LinExpr, rhs: f64) {
        self.eq_rows.push((expr, rhs));
    }

    pub fn add_le(&mut self, expr: LinExpr, rhs: f64) {
        self.le_rows.push((expr, rhs));
    }

    pub fn add_ge(&mut self, expr: LinExpr, rhs: f64) {
        let negated = LinExpr {
            terms: expr.terms.iter().map(|&(i, c)| (i, -c)).collect(),
            constant: -expr.constant,
        };
        self.le_rows.push((negated, -rhs));
    }

    pub fn add_soc(&mut self, t: LinExpr, x: Vec<LinExpr>) {
        self.soc_blocks.push(SocBlock { t, x });
    }

    pub fn add_rsoc(&mut self, u: LinExpr, v: LinExpr, w: Vec<LinExpr>) {
        self.rsoc_blocks.push(RsocBlock { u, v, w });
    }

    pub fn num_eq_rows(&self) -> usize {
        self.eq_rows.len()
    }

    pub fn num_le_rows(&self) -> usize {
        self.le_rows.len()
    }

    pub fn num_cone_blocks(&self) -> usize {
        self.soc_blocks.len() + self.rsoc_blocks.len()
    }

    pub(crate) fn eq_rows(&self) -> &[(LinExpr, f64)] {
        &self.eq_rows
    }

    pub(crate) fn le_rows(&self) -> &[(LinExpr, f64)] {
        &self.le_rows
    }

    pub(crate) fn soc_blocks(&self) -> &[SocBlock] {
        &self.soc_blocks
    }

    pub(crate) fn rsoc_blocks(&self) -> &[RsocBlock] {
        &self.rsoc_blocks
    }

    pub(crate) fn obj_linear(&self) -> &[f64] {
        &self.obj_linear
    }

    pub(crate) fn obj_quad_diag(&self) -> &[f64] {
        &self.obj_quad_diag
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let mut v = self.obj_constant;
        for i in 0..self.num_vars() {
            v += self.obj_linear[i] * x[i] + self.obj_quad_diag[i] * x[i] * x[i];
        }
        v
    }

    pub fn validate(&self) -> Result<(), ProgramError> {
        let n = self.num_vars();
        for (i, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo > hi {
                return Err(ProgramError::EmptyBounds { index: i });
            }
        }
        for (i, &q) in self.obj_quad_diag.iter().enumerate() {
            if q < 0.0 {
                return Err(ProgramError::NegativeQuadratic { index: i, coeff: q });
            }
        }
        let check_expr = |e: &LinExpr, what: &str| -> Result<(), ProgramError> {
            if let Some(max) = e.max_index() {
                if max >= n {
                    return Err(ProgramError::UndeclaredVariable { index: max, vars: n });
                }
            }
            if !e.constant.is_finite() || e.terms.iter().any(|&(_, c)| !c.is_finite()) {
                return Err(ProgramError::NonFinite(what.to_string()));
            }
            Ok(())
        };
        for (row, rhs) in self.eq_rows.iter().chain(&self.le_rows) {
            check_expr(row, "linear row")?;
            if !rhs.is_finite() {
                return Err(ProgramError::NonFinite("row rhs".into()));
            }
        }
        for b in &self.soc_blocks {
            check_expr(&b.t, "soc head")?;
            for e in &b.x {
                check_expr(e, "soc member")?;
            }
        }
        for b in &self.rsoc_blocks {
            check_expr(&b.u, "rsoc u")?;
            check_expr(&b.v, "rsoc v")?;
            for e in &b.w {
                check_expr(e, "rsoc w")?;
            }
        }
        if self.obj_linear.iter().chain(self.obj_quad_diag.iter()).any(|c| !c.is_finite()) {
            return Err(ProgramError::NonFinite("objective".into()));
        }
        Ok(())
    }

    /// Independent feasibility re-check of a candidate point: every bound,
    /// row and cone block is evaluated directly. Returns the violated
    /// constraints with their magnitudes.
    pub fn check_point(&self, x: &[f64], tol: f64) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for i in 0..self.num_vars() {
            if x[i] < self.lower[i] - tol {
                out.push((format!("lb x{i} ({})", self.names[i]), self.lower[i] - x[i]));
            }
            if x[i] > self.upper[i] + tol {
                out.push((format!("ub x{i} ({})", self.names[i]), x[i] - self.upper[i]));
            }
        }
        for (j, (row, rhs)) in self.eq_rows.iter().enumerate() {
            let v = (row.eval(x) - rhs).abs();
            if v > tol {
                out.push((format!("eq row {j}"), v));
            }
        }
        for (j, (row, rhs)) in self.le_rows.iter().enumerate() {
            let v = row.eval(x) - rhs;
            if v > tol {
                out.push((format!("le row {j}"), v));
            }
        }
        for (j, b) in self.soc_blocks.iter().enumerate() {
            let t = b.t.eval(x);
            let norm = b.x.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
            if norm - t > tol {
                out.push((format!("soc block {j}"), norm - t));
            }
        }
        for (j, b) in self.rsoc_blocks.iter().enumerate() {
            let u = b.u.eval(x);
            let v = b.v.eval(x);
            let w2 = b.w.iter().map(|e| e.eval(x).powi(2)).sum::<f64>();
            if u < -tol {
                out.push((format!("rsoc block {j} u"), -u));
            }
            if v < -tol {
                out.push((format!("rsoc block {j} v"), -v));
            }
            // Scale-aware margin: u*v - |w|^2 >= -tol * (1 + |w|^2).
            if w2 - u.max(0.0) * v.max(0.0) > tol * (1.0 + w2) {
                out.push((format!("rsoc block {j}"), w2 - u * v));
            }
        }
        out
    }

    /// Plain-text dump for external verification: objective, bounds, rows
    /// and cone blocks, one item per line.
    pub fn dump(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "conic-program vars={} eq={} le={} soc={} rsoc={}",
            self.num_vars(),
            self.eq_rows.len(),
            self.le_rows.len(),
            self.soc_blocks.len(),
            self.rsoc_blocks.len()
        );
        let _ = writeln!(s, "objective-constant {}", self.obj_constant);
        for i in 0..self.num_vars() {
            let _ = writeln!(
                s,
                "var x{i} name={} lo={} hi={} lin={} quad={}",
                self.names[i], self.lower[i], self.upper[i], self.obj_linear[i], self.obj_quad_diag[i]
            );
        }
        for (row, rhs) in &self.eq_rows {
            let _ = writeln!(s, "eq {row} = {rhs}");
        }
        for (row, rhs) in &self.le_rows {
            let _ = writeln!(s, "le {row} <= {rhs}");
        }
        for b in &self.soc_blocks {
            let _ = write!(s, "soc t: {}", b.t);
            for e in &b.x {
                let _ = write!(s, " | {e}");
            }
            let _ = writeln!(s);
        }
        for b in &self.rsoc_blocks {
            let _ = write!(s, "rsoc u: {} v: {}", b.u, b.v);
            for e in &b.w {
                let _ = write!(s, " | {e}");
            }
            let _ = writeln!(s);
        }
        s
    }
}

/// Solver outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
    pub max_primal_residual: f64,
    pub max_dual_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub enum SolveError {
    Malformed(ProgramError),
}

impl std::fmt::Display for SolveError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveError::Malformed(e) => write!(f, "malformed program: {e}"),
        }
    }
}

impl std::error::Error for SolveError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_catches_undeclared_vars_and_bad_quadratics() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 0.0, 1.0);
        p.add_le(LinExpr::var(x + 5), 1.0);
        assert!(matches!(p.validate(), Err(ProgramError::UndeclaredVariable { .. })));

        let mut p = ConicProgram::new();
        let x = p.add_var("x", 0.0, 1.0);
        p.add_quadratic_obj(x, -1.0);
        assert!(matches!(p.validate(), Err(ProgramError::NegativeQuadratic { .. })));
    }

    #[test]
    fn check_point_flags_each_family() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 0.0, 1.0);
        let y = p.add_var("y", f64::NEG_INFINITY, f64::INFINITY);
        p.add_eq(LinExpr::var(x).plus(y, 1.0), 2.0);
        p.add_le(LinExpr::var(y), 0.5);
        p.add_rsoc(LinExpr::var(x), LinExpr::constant(1.0), vec![LinExpr::var(y)]);
        let bad = vec![1.5, 3.0];
        let report = p.check_point(&bad, 1e-9);
        assert!(report.iter().any(|(name, _)| name.starts_with("ub x0")));
        assert!(report.iter().any(|(name, _)| name.starts_with("eq row")));
        assert!(report.iter().any(|(name, _)| name.starts_with("le row")));
        assert!(report.iter().any(|(name, _)| name.starts_with("rsoc block")));
    }

    #[test]
    fn dump_mentions_every_block() {
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 0.0, 1.0);
        p.add_linear_obj(x, 2.0);
        p.add_le(LinExpr::var(x), 0.7);
        p.add_soc(LinExpr::constant(1.0), vec![LinExpr::var(x)]);
        let text = p.dump();
        assert!(text.contains("var x0 name=x"));
        assert!(text.contains("le 1*x0 <= 0.7"));
        assert!(text.contains("soc t: 1"));
    }
}
