//! Dense tableau simplex for two-player zero-sum matrix games.
//!
//! The column player's problem is solved in the normalized form
//!
//! ```text
//! max Σ w_j   s.t.  A' w ≤ 1,  w ≥ 0,      A' = A + shift > 0
//! ```
//!
//! whose optimum is `1/v'` with `v' = v + shift`. The row player's strategy
//! comes from the dual prices of the slack columns. The entering column is
//! the lowest-index improving one; the leaving row comes from a Harris ratio
//! test, falling back to Bland's rule after many pivots so degenerate
//! problems cannot cycle.

const PIVOT_EPS: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-12;
const REFINE_TOL: f64 = 1e-9;
const SINGULAR_EPS: f64 = 1e-12;


/// Reusable workspace; solving does not allocate once buffers have grown.
#[derive(Debug, Default, Clone)]
pub struct ZeroSumLp {
    tableau: Vec<f64>,
    objective: Vec<f64>,
    basis: Vec<usize>,
    lu: Vec<f64>,
    perm: Vec<usize>,
    primal: Vec<f64>,
    dual: Vec<f64>,
    scratch: Vec<f64>,
    shifted: Vec<f64>,
    tight: Vec<usize>,
    support: Vec<usize>,
    skip_refine: bool,
}

/// Maps payoffs into the strictly positive normalized program.
struct Affine {
    min: f64,
    scale: f64,
}

impl Affine {
    const SHIFT: f64 = 1.0;

    fn apply(&self, p: f64) -> f64 {
        (p - self.min) / self.scale + Self::SHIFT
    }

    fn value(&self, z: f64) -> f64 {
        (1.0 / z - Self::SHIFT) * self.scale + self.min
    }
}

impl ZeroSumLp {
    pub fn new() -> Self {
        Self::default()
    }

    /// Skips re-solving the final basis. Results carry the tableau's
    /// accumulated rounding error, which is fine for learning updates.
    pub fn fast() -> Self {
        ZeroSumLp {
            skip_refine: true,
            ..Self::default()
        }
    }

    /// Solves the game whose row-player payoffs are the `rows × cols`
    /// row-major matrix `payoff`. Writes the maximin row strategy and the
    /// minimax column strategy and returns the game value.
    pub fn solve(
        &mut self,
        rows: usize,
        cols: usize,
        payoff: &[f64],
        row_strategy: &mut [f64],
        col_strategy: &mut [f64],
    ) -> f64 {
        self.solve_inner(rows, cols, payoff, None, row_strategy, col_strategy)
    }

    /// [`ZeroSumLp::solve`] that first tries `basis`, the optimal basis of a
    /// previous nearby matrix, and only runs the simplex if it is no longer
    /// optimal. On return `basis` holds the basis that was used.
    pub fn solve_warm(
        &mut self,
        rows: usize,
        cols: usize,
        payoff: &[f64],
        basis: &mut Vec<usize>,
        row_strategy: &mut [f64],
        col_strategy: &mut [f64],
    ) -> f64 {
        let v = self.solve_inner(rows, cols, payoff, Some(basis), row_strategy, col_strategy);
        basis.clear();
        basis.extend_from_slice(&self.basis);
        v
    }

    fn solve_inner(
        &mut self,
        rows: usize,
        cols: usize,
        payoff: &[f64],
        hint: Option<&[usize]>,
        row_strategy: &mut [f64],
        col_strategy: &mut [f64],
    ) -> f64 {
        debug_assert_eq!(payoff.len(), rows * cols);
        let min = payoff.iter().copied().fold(f64::INFINITY, f64::min);
        let max = payoff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max - min <= 0.0 {
            // Constant game: every profile is optimal; take the first actions.
            row_strategy.fill(0.0);
            col_strategy.fill(0.0);
            row_strategy[0] = 1.0;
            col_strategy[0] = 1.0;
            self.basis.clear();
            self.basis.extend(cols..cols + rows);
            return min;
        }
        // Scale to unit range so pivot tolerances are meaningful.
        let affine = Affine {
            min,
            scale: max - min,
        };
        self.shifted.clear();
        self.shifted.extend(payoff.iter().map(|&p| affine.apply(p)));
        if let Some(hint) = hint {
            if hint.len() == rows && hint.iter().all(|&b| b < cols + rows) {
                self.basis.clear();
                self.basis.extend_from_slice(hint);
                if let Some(z) = self.basis_solution(rows, cols) {
                    return self.finish(cols, z, &affine, row_strategy, col_strategy);
                }
            }
        }

        let width = cols + rows + 1;
        let rhs = width - 1;
        self.tableau.clear();
        self.tableau.resize(rows * width, 0.0);
        for i in 0..rows {
            let t = &mut self.tableau[i * width..(i + 1) * width];
            for j in 0..cols {
                t[j] = self.shifted[i * cols + j];
            }
            t[cols + i] = 1.0;
            t[rhs] = 1.0;
        }
        self.objective.clear();
        self.objective.resize(width, 0.0);
        self.objective[..cols].fill(-1.0);
        self.basis.clear();
        self.basis.extend(cols..cols + rows);

        let mut iterations = 0;
        let bland_after = 20 * (rows + cols);
        loop {
            let Some(enter) = (0..rhs).find(|&j| self.objective[j] < -PIVOT_EPS) else {
                break;
            };
            iterations += 1;
            let leave = if iterations <= bland_after {
                self.harris_row(rows, width, enter)
            } else {
                self.bland_row(rows, width, enter)
            };
            // The program is bounded because A' > 0, so a missing leaving row
            // means the reduced cost is rounding noise.
            let Some(leave) = leave else {
                break;
            };
            self.pivot(width, leave, enter);
        }

        if !self.skip_refine {
            if let Some(z) = self.basis_solution(rows, cols) {
                return self.finish(cols, z, &affine, row_strategy, col_strategy);
            }
        }
        col_strategy.fill(0.0);
        for (i, &b) in self.basis.iter().enumerate() {
            if b < cols {
                col_strategy[b] = self.tableau[i * width + rhs].max(0.0);
            }
        }
        for i in 0..rows {
            row_strategy[i] = self.objective[cols + i].max(0.0);
        }
        normalize(col_strategy);
        normalize(row_strategy);
        affine.value(self.objective[rhs])
    }

    fn finish(
        &self,
        cols: usize,
        z: f64,
        affine: &Affine,
        row_strategy: &mut [f64],
        col_strategy: &mut [f64],
    ) -> f64 {
        col_strategy.fill(0.0);
        for (k, &var) in self.basis.iter().enumerate() {
            if var < cols {
                col_strategy[var] = self.primal[k].max(0.0);
            }
        }
        for (x, &p) in row_strategy.iter_mut().zip(&self.dual) {
            *x = p.max(0.0);
        }
        normalize(col_strategy);
        normalize(row_strategy);
        affine.value(z)
    }

    /// Solves for the primal and dual solutions of `self.basis` directly from
    /// the data, free of the rounding accumulated over pivots. Returns the
    /// objective, or `None` if the basis is singular or not optimal to within
    /// tolerance.
    fn basis_solution(&mut self, rows: usize, cols: usize) -> Option<f64> {
        // Basic slacks carry zero dual prices, so only the tight rows `T` and
        // basic columns `C` form a square system: A'[T, C]·y = 1 and
        // A'[T, C]ᵀ·π = 1.
        let a = &self.shifted;
        self.tight.clear();
        self.tight.extend(0..rows);
        self.support.clear();
        for &var in &self.basis {
            if var < cols {
                self.support.push(var);
            } else if let Some(t) = self.tight.iter().position(|&i| i == var - cols) {
                self.tight.swap_remove(t);
            }
        }
        self.tight.sort_unstable();
        let k = self.support.len();
        if self.tight.len() != k {
            return None;
        }
        self.lu.clear();
        for &i in &self.tight {
            for &j in &self.support {
                self.lu.push(a[i * cols + j]);
            }
        }
        self.perm.clear();
        self.perm.extend(0..k);
        let lu = &mut self.lu;
        // Partial-pivoting LU: P·M = L·U.
        for c in 0..k {
            let mut p = c;
            for r in c + 1..k {
                if lu[r * k + c].abs() > lu[p * k + c].abs() {
                    p = r;
                }
            }
            if lu[p * k + c].abs() < SINGULAR_EPS {
                return None;
            }
            if p != c {
                for j in 0..k {
                    lu.swap(p * k + j, c * k + j);
                }
                self.perm.swap(p, c);
            }
            let pivot = lu[c * k + c];
            for r in c + 1..k {
                let f = lu[r * k + c] / pivot;
                lu[r * k + c] = f;
                for j in c + 1..k {
                    lu[r * k + j] -= f * lu[c * k + j];
                }
            }
        }
        // M·y = 1 (the permuted right-hand side is still all ones).
        self.scratch.clear();
        self.scratch.resize(3 * k, 1.0);
        let (y, rest) = self.scratch.split_at_mut(k);
        let (w, v) = rest.split_at_mut(k);
        for i in 0..k {
            for j in 0..i {
                y[i] -= lu[i * k + j] * y[j];
            }
        }
        for i in (0..k).rev() {
            for j in i + 1..k {
                y[i] -= lu[i * k + j] * y[j];
            }
            y[i] /= lu[i * k + i];
        }
        // Mᵀ·π = 1 through Uᵀ·w = 1, Lᵀ·v = w, π = Pᵀ·v.
        for i in 0..k {
            let mut acc = 1.0;
            for j in 0..i {
                acc -= lu[j * k + i] * w[j];
            }
            w[i] = acc / lu[i * k + i];
        }
        for i in (0..k).rev() {
            let mut acc = w[i];
            for j in i + 1..k {
                acc -= lu[j * k + i] * v[j];
            }
            v[i] = acc;
        }
        self.dual.clear();
        self.dual.resize(rows, 0.0);
        for i in 0..k {
            self.dual[self.tight[self.perm[i]]] = v[i];
        }
        // Values of the basic variables in basis order.
        self.primal.clear();
        let mut z = 0.0;
        for &var in &self.basis {
            let q = if var < cols {
                let c = self.support.iter().position(|&j| j == var).unwrap_or(0);
                z += y[c];
                y[c]
            } else {
                let i = var - cols;
                1.0 - self
                    .support
                    .iter()
                    .zip(y.iter())
                    .map(|(&j, &yj)| a[i * cols + j] * yj)
                    .sum::<f64>()
            };
            self.primal.push(q);
        }
        if self.primal.iter().chain(&self.dual).any(|&q| !(q >= -REFINE_TOL)) {
            return None;
        }
        for j in 0..cols {
            let reduced: f64 = self
                .tight
                .iter()
                .map(|&i| self.dual[i] * a[i * cols + j])
                .sum::<f64>()
                - 1.0;
            if reduced < -REFINE_TOL {
                return None;
            }
        }
        Some(z)
    }

    /// Two-pass ratio test: among rows within a small tolerance of the
    /// minimum ratio, take the largest pivot.
    fn harris_row(&self, rows: usize, width: usize, enter: usize) -> Option<usize> {
        let rhs = width - 1;
        let mut bound = f64::INFINITY;
        for i in 0..rows {
            let coef = self.tableau[i * width + enter];
            if coef > PIVOT_EPS {
                bound = bound.min((self.tableau[i * width + rhs].max(0.0) + FEAS_TOL) / coef);
            }
        }
        let mut leave: Option<usize> = None;
        for i in 0..rows {
            let coef = self.tableau[i * width + enter];
            if coef <= PIVOT_EPS || self.tableau[i * width + rhs].max(0.0) / coef > bound {
                continue;
            }
            let better = match leave {
                None => true,
                Some(l) => {
                    let best = self.tableau[l * width + enter];
                    coef > best || (coef == best && self.basis[i] < self.basis[l])
                }
            };
            if better {
                leave = Some(i);
            }
        }
        leave
    }

    /// Minimum ratio, ties to the lowest basic index.
    fn bland_row(&self, rows: usize, width: usize, enter: usize) -> Option<usize> {
        let rhs = width - 1;
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..rows {
            let coef = self.tableau[i * width + enter];
            if coef <= PIVOT_EPS {
                continue;
            }
            let ratio = self.tableau[i * width + rhs].max(0.0) / coef;
            let better = match leave {
                None => true,
                Some(l) => ratio < best || (ratio == best && self.basis[i] < self.basis[l]),
            };
            if better {
                best = ratio;
                leave = Some(i);
            }
        }
        leave
    }

    fn pivot(&mut self, width: usize, leave: usize, enter: usize) {
        let p = self.tableau[leave * width + enter];
        for x in &mut self.tableau[leave * width..(leave + 1) * width] {
            *x /= p;
        }
        let (before, rest) = self.tableau.split_at_mut(leave * width);
        let (pivot_row, after) = rest.split_at_mut(width);
        for row in before
            .chunks_exact_mut(width)
            .chain(after.chunks_exact_mut(width))
        {
            let f = row[enter];
            if f != 0.0 {
                for (x, &y) in row.iter_mut().zip(pivot_row.iter()) {
                    *x -= f * y;
                }
                row[enter] = 0.0;
                if row[width - 1] < 0.0 {
                    row[width - 1] = 0.0;
                }
            }
        }
        let f = self.objective[enter];
        if f != 0.0 {
            for (x, &y) in self.objective.iter_mut().zip(pivot_row.iter()) {
                *x -= f * y;
            }
            self.objective[enter] = 0.0;
        }
        self.basis[leave] = enter;
    }
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in v.iter_mut() {
            *x /= total;
        }
    }
}
