//! Model building: variables, linear constraints and a minimization objective.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::MilpError;

/// Handle to a variable of one [`ModelBuilder`] / [`MilpModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }

    /// Whether `lhs rel rhs` holds up to `tol`.
    pub fn holds(self, lhs: f64, rhs: f64, tol: f64) -> bool {
        match self {
            Relation::Le => lhs <= rhs + tol,
            Relation::Eq => (lhs - rhs).abs() <= tol,
            Relation::Ge => lhs >= rhs - tol,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

/// `sum(coeffs) relation rhs`, coefficients sorted by variable and merged.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn lhs(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, c)| c * values[v.0]).sum()
    }
}

#[derive(Debug, Default)]
pub struct ModelBuilder {
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Vec<(VarId, f64)>,
}

impl ModelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Continuous variable on `[lower, upper]`; either side may be infinite.
    pub fn continuous(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
    ) -> Result<VarId, MilpError> {
        let name = name.into();
        check_bounds(&name, lower, upper)?;
        Ok(self.push(Variable {
            name,
            kind: VarKind::Continuous,
            lower,
            upper,
        }))
    }

    /// Unbounded continuous variable.
    pub fn free(&mut self, name: impl Into<String>) -> VarId {
        self.push(Variable {
            name: name.into(),
            kind: VarKind::Continuous,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        })
    }

    pub fn binary(&mut self, name: impl Into<String>) -> VarId {
        self.push(Variable {
            name: name.into(),
            kind: VarKind::Binary,
            lower: 0.0,
            upper: 1.0,
        })
    }

    fn push(&mut self, var: Variable) -> VarId {
        self.vars.push(var);
        VarId(self.vars.len() - 1)
    }

    /// Tightens or replaces the bounds of an existing variable.
    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) -> Result<(), MilpError> {
        self.check_var(var)?;
        let v = &mut self.vars[var.0];
        check_bounds(&v.name, lower, upper)?;
        v.lower = lower;
        v.upper = upper;
        Ok(())
    }

    pub fn fix(&mut self, var: VarId, value: f64) -> Result<(), MilpError> {
        self.set_bounds(var, value, value)
    }

    pub fn bounds(&self, var: VarId) -> Option<(f64, f64)> {
        self.vars.get(var.0).map(|v| (v.lower, v.upper))
    }

    /// Adds `sum(coeffs) relation rhs`. Repeated variables are summed.
    pub fn constrain<I>(&mut self, coeffs: I, relation: Relation, rhs: f64) -> Result<(), MilpError>
    where
        I: IntoIterator<Item = (VarId, f64)>,
    {
        if !rhs.is_finite() {
            return Err(MilpError::NonFinite("constraint right-hand side".into()));
        }
        let coeffs = self.canonical(coeffs)?;
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        Ok(())
    }

    pub fn le<I>(&mut self, coeffs: I, rhs: f64) -> Result<(), MilpError>
    where
        I: IntoIterator<Item = (VarId, f64)>,
    {
        self.constrain(coeffs, Relation::Le, rhs)
    }

    pub fn ge<I>(&mut self, coeffs: I, rhs: f64) -> Result<(), MilpError>
    where
        I: IntoIterator<Item = (VarId, f64)>,
    {
        self.constrain(coeffs, Relation::Ge, rhs)
    }

    pub fn eq<I>(&mut self, coeffs: I, rhs: f64) -> Result<(), MilpError>
    where
        I: IntoIterator<Item = (VarId, f64)>,
    {
        self.constrain(coeffs, Relation::Eq, rhs)
    }

    /// Replaces the objective (always minimized).
    pub fn minimize<I>(&mut self, coeffs: I) -> Result<(), MilpError>
    where
        I: IntoIterator<Item = (VarId, f64)>,
    {
        self.objective = self.canonical(coeffs)?;
        Ok(())
    }

    pub fn build(self) -> MilpModel {
        MilpModel {
            vars: self.vars,
            constraints: self.constraints,
            objective: self.objective,
        }
    }

    fn check_var(&self, var: VarId) -> Result<(), MilpError> {
        if var.0 < self.vars.len() {
            Ok(())
        } else {
            Err(MilpError::UnknownVariable(var))
        }
    }

    fn canonical<I>(&self, coeffs: I) -> Result<Vec<(VarId, f64)>, MilpError>
    where
        I: IntoIterator<Item = (VarId, f64)>,
    {
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for (var, c) in coeffs {
            self.check_var(var)?;
            if !c.is_finite() {
                return Err(MilpError::NonFinite(format!("coefficient of {var}")));
            }
            *merged.entry(var).or_insert(0.0) += c;
        }
        Ok(merged.into_iter().collect())
    }
}

fn check_bounds(name: &str, lower: f64, upper: f64) -> Result<(), MilpError> {
    if lower.is_nan() || upper.is_nan() || lower > upper || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
        return Err(MilpError::InvertedBounds {
            name: name.to_string(),
            lower,
            upper,
        });
    }
    Ok(())
}

/// Immutable MILP: minimize `objective` subject to `constraints` and variable bounds.
#[derive(Debug, Clone)]
pub struct MilpModel {
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Vec<(VarId, f64)>,
}

impl MilpModel {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn variable(&self, var: VarId) -> &Variable {
        &self.vars[var.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[(VarId, f64)] {
        &self.objective
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.vars.len()).map(VarId)
    }

    pub fn binaries(&self) -> Vec<VarId> {
        self.var_ids()
            .filter(|v| self.vars[v.0].kind == VarKind::Binary)
            .collect()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v.lower).collect()
    }

    pub fn upper_bounds(&self) -> Vec<f64> {
        self.vars.iter().map(|v| v.upper).collect()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * values[v.0]).sum()
    }

    /// Largest violation over constraints and variable bounds.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &x) in self.vars.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
        }
        for c in &self.constraints {
            let lhs = c.lhs(values);
            let viol = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Copy of the model with `var` restricted to `[lower, upper]`.
    pub fn with_bounds(&self, var: VarId, lower: f64, upper: f64) -> Result<MilpModel, MilpError> {
        let mut out = self.clone();
        let v = out.vars.get_mut(var.0).ok_or(MilpError::UnknownVariable(var))?;
        check_bounds(&v.name, lower, upper)?;
        v.lower = lower;
        v.upper = upper;
        Ok(out)
    }
}
