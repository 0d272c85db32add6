//! Dense two-phase simplex with Bland's rule, generic over an exact rational
//! field (default) or f64.
//!
//! The bin-packing feasibility test needs a genuine *basic* feasible
//! solution — the fractional-support bound on light items reads off the
//! basis — so this is a textbook tableau implementation rather than a
//! heuristic solver. Problem sizes here are tiny.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::{One, Signed, Zero};

use crate::rational::Rational;

/// Field the tableau runs over.
pub trait Scalar:
    Clone
    + PartialEq
    + PartialOrd
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn s_zero() -> Self;
    fn s_one() -> Self;
    /// Strictly negative beyond round-off.
    fn is_neg(&self) -> bool;
    /// Strictly positive beyond round-off.
    fn is_pos(&self) -> bool;
    fn is_zero_s(&self) -> bool {
        !self.is_neg() && !self.is_pos()
    }
}

impl Scalar for Rational {
    fn s_zero() -> Self {
        Rational::zero()
    }
    fn s_one() -> Self {
        Rational::one()
    }
    fn is_neg(&self) -> bool {
        self.is_negative()
    }
    fn is_pos(&self) -> bool {
        self.is_positive()
    }
}

impl Scalar for f64 {
    fn s_zero() -> Self {
        0.0
    }
    fn s_one() -> Self {
        1.0
    }
    fn is_neg(&self) -> bool {
        *self < -1e-9
    }
    fn is_pos(&self) -> bool {
        *self > 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Constraint<T> {
    pub coeffs: Vec<T>,
    pub rel: Rel,
    pub rhs: T,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpError {
    Infeasible,
    Unbounded,
}

/// A vertex of the feasible region: structural variable values, the achieved
/// objective, and the final basis (variable index per row; slack/artificial
/// indices exceed `x.len()`).
#[derive(Debug, Clone)]
pub struct BasicSolution<T> {
    pub x: Vec<T>,
    pub objective: T,
    pub basis: Vec<usize>,
}

impl<T: Scalar> BasicSolution<T> {
    /// Number of structural variables strictly between 0 and 1.
    pub fn fractional_count(&self) -> usize {
        self.x
            .iter()
            .filter(|v| v.is_pos() && ((*v).clone() - T::s_one()).is_neg())
            .count()
    }
}

/// Minimizes `objective · x` subject to the constraints and `x ≥ 0`.
pub fn solve_lp<T: Scalar>(
    objective: &[T],
    constraints: &[Constraint<T>],
) -> Result<BasicSolution<T>, LpError> {
    let n = objective.len();
    let m = constraints.len();

    // Count extra columns: one slack/surplus per inequality, one artificial
    // per Ge/Eq row (and per Le row with negative rhs after normalization).
    let mut rows: Vec<(Vec<T>, Rel, T)> = constraints
        .iter()
        .map(|c| {
            assert_eq!(c.coeffs.len(), n, "constraint width mismatch");
            (c.coeffs.clone(), c.rel, c.rhs.clone())
        })
        .collect();
    // Normalize to nonnegative rhs.
    for (coeffs, rel, rhs) in rows.iter_mut() {
        if rhs.is_neg() {
            for v in coeffs.iter_mut() {
                *v = -v.clone();
            }
            *rhs = -rhs.clone();
            *rel = match *rel {
                Rel::Le => Rel::Ge,
                Rel::Ge => Rel::Le,
                Rel::Eq => Rel::Eq,
            };
        }
    }
    let n_slack = rows.iter().filter(|(_, rel, _)| *rel != Rel::Eq).count();
    let n_art = rows.iter().filter(|(_, rel, _)| *rel != Rel::Le).count();
    let total = n + n_slack + n_art;

    let mut a: Vec<Vec<T>> = Vec::with_capacity(m);
    let mut b: Vec<T> = Vec::with_capacity(m);
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let mut slack_at = n;
    let mut art_at = n + n_slack;
    let art_start = n + n_slack;
    for (coeffs, rel, rhs) in rows {
        let mut row: Vec<T> = Vec::with_capacity(total);
        row.extend(coeffs);
        row.resize(total, T::s_zero());
        match rel {
            Rel::Le => {
                row[slack_at] = T::s_one();
                basis.push(slack_at);
                slack_at += 1;
            }
            Rel::Ge => {
                row[slack_at] = -T::s_one();
                slack_at += 1;
                row[art_at] = T::s_one();
                basis.push(art_at);
                art_at += 1;
            }
            Rel::Eq => {
                row[art_at] = T::s_one();
                basis.push(art_at);
                art_at += 1;
            }
        }
        a.push(row);
        b.push(rhs);
    }

    // Phase 1: minimize the sum of artificials.
    if n_art > 0 {
        let mut cost: Vec<T> = vec![T::s_zero(); total];
        for c in cost.iter_mut().skip(art_start) {
            *c = T::s_one();
        }
        let mut obj_val = T::s_zero();
        // Canonicalize: subtract artificial-basis rows from the cost row.
        for (i, &bv) in basis.iter().enumerate() {
            if bv >= art_start {
                for j in 0..total {
                    cost[j] = cost[j].clone() - a[i][j].clone();
                }
                obj_val = obj_val - b[i].clone();
            }
        }
        run_simplex(&mut a, &mut b, &mut basis, &mut cost, &mut obj_val, total)?;
        if (-obj_val.clone()).is_pos() {
            return Err(LpError::Infeasible);
        }
        // Drive remaining artificials out of the basis.
        for i in 0..m {
            if basis[i] >= art_start {
                if let Some(j) = (0..art_start).find(|&j| !a[i][j].is_zero_s()) {
                    pivot(&mut a, &mut b, &mut basis, &mut vec![T::s_zero(); total], &mut T::s_zero(), i, j);
                }
                // else: redundant row, the artificial stays basic at zero.
            }
        }
    }

    // Phase 2: original objective, artificial columns banned.
    let mut cost: Vec<T> = vec![T::s_zero(); total];
    cost[..n].clone_from_slice(objective);
    let mut obj_val = T::s_zero();
    for (i, &bv) in basis.iter().enumerate() {
        if !cost[bv].is_zero_s() {
            let f = cost[bv].clone();
            for j in 0..total {
                cost[j] = cost[j].clone() - f.clone() * a[i][j].clone();
            }
            obj_val = obj_val.clone() - f * b[i].clone();
        }
    }
    run_simplex(&mut a, &mut b, &mut basis, &mut cost, &mut obj_val, art_start)?;

    let mut x = vec![T::s_zero(); n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            x[bv] = b[i].clone();
        }
    }
    Ok(BasicSolution {
        x,
        objective: -obj_val,
        basis,
    })
}

/// Bland's rule: entering = lowest-index negative reduced cost; leaving =
/// min-ratio row breaking ties toward the lowest basic variable index.
fn run_simplex<T: Scalar>(
    a: &mut [Vec<T>],
    b: &mut [T],
    basis: &mut [usize],
    cost: &mut [T],
    obj_val: &mut T,
    allowed_cols: usize,
) -> Result<(), LpError> {
    loop {
        let entering = match (0..allowed_cols).find(|&j| cost[j].is_neg()) {
            Some(j) => j,
            None => return Ok(()),
        };
        let mut leave: Option<(usize, T)> = None;
        for i in 0..a.len() {
            if a[i][entering].is_pos() {
                let ratio = b[i].clone() / a[i][entering].clone();
                let replace = match &leave {
                    None => true,
                    Some((bi, br)) => {
                        (ratio.clone() - br.clone()).is_neg()
                            || (!(ratio.clone() - br.clone()).is_pos()
                                && basis[i] < basis[*bi])
                    }
                };
                if replace {
                    leave = Some((i, ratio));
                }
            }
        }
        let (row, _) = leave.ok_or(LpError::Unbounded)?;
        pivot(a, b, basis, cost, obj_val, row, entering);
    }
}

fn pivot<T: Scalar>(
    a: &mut [Vec<T>],
    b: &mut [T],
    basis: &mut [usize],
    cost: &mut [T],
    obj_val: &mut T,
    row: usize,
    col: usize,
) {
    let total = a[row].len();
    let p = a[row][col].clone();
    for j in 0..total {
        a[row][j] = a[row][j].clone() / p.clone();
    }
    b[row] = b[row].clone() / p;
    for i in 0..a.len() {
        if i != row && !a[i][col].is_zero_s() {
            let f = a[i][col].clone();
            for j in 0..total {
                a[i][j] = a[i][j].clone() - f.clone() * a[row][j].clone();
            }
            b[i] = b[i].clone() - f * b[row].clone();
        }
    }
    if !cost[col].is_zero_s() {
        let f = cost[col].clone();
        for j in 0..total {
            cost[j] = cost[j].clone() - f.clone() * a[row][j].clone();
        }
        *obj_val = obj_val.clone() - f * b[row].clone();
    }
    basis[row] = col;
}
