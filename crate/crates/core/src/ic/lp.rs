//! Exact feasibility of `A y >= r, y >= 0` by phase-one simplex with
//! Bland's rule, and Farkas certificates when infeasible.

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Sparse row `sum coeffs[j].1 * y[coeffs[j].0] >= rhs`.
#[derive(Clone, Debug)]
pub struct Row {
    pub coeffs: Vec<(usize, BigRational)>,
    pub rhs: BigRational,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Feasible(Vec<BigRational>),
    /// `lambda >= 0` with `lambda^T A <= 0` and `lambda^T r > 0`.
    Infeasible(Vec<BigRational>),
}

pub fn solve(vars: usize, rows: &[Row]) -> Outcome {
    match phase_one(vars, rows) {
        Some(y) => Outcome::Feasible(y),
        None => Outcome::Infeasible(farkas(vars, rows)),
    }
}

/// Finds a point of `{y >= 0 : A y >= r}` or reports that none exists.
pub fn phase_one(vars: usize, rows: &[Row]) -> Option<Vec<BigRational>> {
    let m = rows.len();
    let artificial: Vec<bool> = rows.iter().map(|r| r.rhs.is_positive()).collect();
    let n_art = artificial.iter().filter(|&&a| a).count();
    let width = vars + m + n_art;
    let mut t = Tableau { a: Vec::with_capacity(m), rhs: Vec::with_capacity(m), basis: Vec::with_capacity(m) };
    let mut next_art = vars + m;
    for (i, row) in rows.iter().enumerate() {
        let mut dense = vec![BigRational::zero(); width];
        if artificial[i] {
            // A y - w + a = r
            for (j, c) in &row.coeffs {
                dense[*j] += c;
            }
            dense[vars + i] = -BigRational::one();
            dense[next_art] = BigRational::one();
            t.basis.push(next_art);
            next_art += 1;
            t.rhs.push(row.rhs.clone());
        } else {
            // -A y + w = -r
            for (j, c) in &row.coeffs {
                dense[*j] -= c;
            }
            dense[vars + i] = BigRational::one();
            t.basis.push(vars + i);
            t.rhs.push(-row.rhs.clone());
        }
        t.a.push(dense);
    }
    let first_art = vars + m;
    // Reduced costs of the phase-one objective: minus the sum of artificial rows.
    let mut cost = vec![BigRational::zero(); width];
    for i in 0..m {
        if artificial[i] {
            for j in 0..first_art {
                if !t.a[i][j].is_zero() {
                    cost[j] -= &t.a[i][j];
                }
            }
        }
    }
    loop {
        let Some(enter) = (0..width).find(|&j| cost[j].is_negative()) else { break };
        let mut leave: Option<(usize, BigRational)> = None;
        for i in 0..m {
            if t.a[i][enter].is_positive() {
                let ratio = &t.rhs[i] / &t.a[i][enter];
                let better = match &leave {
                    None => true,
                    Some((l, best)) => ratio < *best || (ratio == *best && t.basis[i] < t.basis[*l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (row, _) = leave.expect("phase-one objective is bounded below");
        t.pivot(row, enter, &mut cost);
    }
    let objective: BigRational =
        (0..m).filter(|&i| t.basis[i] >= first_art).fold(BigRational::zero(), |acc, i| acc + &t.rhs[i]);
    if objective.is_positive() {
        return None;
    }
    let mut y = vec![BigRational::zero(); vars];
    for i in 0..m {
        if t.basis[i] < vars {
            y[t.basis[i]] = t.rhs[i].clone();
        }
    }
    Some(y)
}

/// Multipliers proving `A y >= r, y >= 0` infeasible. Panics if the system
/// is feasible.
pub fn farkas(vars: usize, rows: &[Row]) -> Vec<BigRational> {
    let m = rows.len();
    let mut columns: Vec<Vec<(usize, BigRational)>> = vec![Vec::new(); vars];
    for (i, row) in rows.iter().enumerate() {
        for (j, c) in &row.coeffs {
            columns[*j].push((i, -c.clone()));
        }
    }
    let mut dual: Vec<Row> = columns.into_iter().map(|coeffs| Row { coeffs, rhs: BigRational::zero() }).collect();
    dual.push(Row {
        coeffs: rows.iter().enumerate().map(|(i, r)| (i, r.rhs.clone())).filter(|(_, c)| !c.is_zero()).collect(),
        rhs: BigRational::one(),
    });
    phase_one(m, &dual).expect("an infeasible system has a Farkas certificate")
}

/// Checks a Farkas certificate.
pub fn certifies(vars: usize, rows: &[Row], lambda: &[BigRational]) -> bool {
    if lambda.len() != rows.len() || lambda.iter().any(|l| l.is_negative()) {
        return false;
    }
    let mut combined = vec![BigRational::zero(); vars];
    let mut rhs = BigRational::zero();
    for (row, l) in rows.iter().zip(lambda) {
        for (j, c) in &row.coeffs {
            combined[*j] += c * l;
        }
        rhs += &row.rhs * l;
    }
    combined.iter().all(|c| !c.is_positive()) && rhs.is_positive()
}

struct Tableau {
    a: Vec<Vec<BigRational>>,
    rhs: Vec<BigRational>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize, cost: &mut [BigRational]) {
        let p = self.a[row][col].clone();
        let nonzero: Vec<usize> = (0..self.a[row].len()).filter(|&j| !self.a[row][j].is_zero()).collect();
        for &j in &nonzero {
            self.a[row][j] /= &p;
        }
        self.rhs[row] /= &p;
        let pivot_row = std::mem::take(&mut self.a[row]);
        let pivot_rhs = self.rhs[row].clone();
        for i in 0..self.a.len() {
            if i == row || self.a[i][col].is_zero() {
                continue;
            }
            let f = self.a[i][col].clone();
            for &j in &nonzero {
                let delta = &f * &pivot_row[j];
                self.a[i][j] -= delta;
            }
            self.rhs[i] -= &f * &pivot_rhs;
        }
        if !cost[col].is_zero() {
            let f = cost[col].clone();
            for &j in &nonzero {
                let delta = &f * &pivot_row[j];
                cost[j] -= delta;
            }
        }
        self.a[row] = pivot_row;
        self.basis[row] = col;
    }
}
