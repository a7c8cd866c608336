use crate::error::{Error, Result};

use super::generator::SparseGenerator;

/// States up to which the dense normalised solve is used.
pub const DENSE_LIMIT: usize = 2000;
/// Widest within-level band accepted by the aggregation solver.
const MAX_BANDWIDTH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMethod {
    Dense,
    Aggregation,
    GaussSeidel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Bound on `‖Q p‖₂ / (Λ ‖p‖₂)` with `Λ = max |Q_ii|`.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-15,
            max_iterations: 20_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StationarySolution {
    pub p: Vec<f64>,
    /// Achieved scaled residual `‖Q p‖₂ / (Λ ‖p‖₂)`.
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

/// Stationary vector of `gen` without level information: dense for small
/// problems, point Gauss–Seidel otherwise.
pub fn stationary_distribution(gen: &SparseGenerator, tol: f64) -> Result<StationarySolution> {
    stationary_distribution_with(gen, None, &SolverOptions { tol, ..SolverOptions::default() })
}

/// Stationary vector of `gen`. When `levels` assigns each state an integer
/// level (a slow variable) such that inter-level jumps change it by one, the
/// iterative aggregation–disaggregation solver is used for large problems.
pub fn stationary_distribution_with(
    gen: &SparseGenerator,
    levels: Option<&[i64]>,
    opts: &SolverOptions,
) -> Result<StationarySolution> {
    if let Some(l) = levels {
        if l.len() != gen.dim() {
            return Err(Error::DimensionMismatch {
                expected: gen.dim(),
                got: l.len(),
            });
        }
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let keep = closed_class(gen)?;
    if keep.len() == gen.dim() {
        return solve_irreducible(gen, levels, opts);
    }
    let sub = gen.restrict(&keep);
    let sub_levels: Option<Vec<i64>> = levels.map(|l| keep.iter().map(|&i| l[i]).collect());
    let sol = solve_irreducible(&sub, sub_levels.as_deref(), opts)?;
    let mut p = vec![0.0; gen.dim()];
    for (&i, &v) in keep.iter().zip(&sol.p) {
        p[i] = v;
    }
    let residual = scaled_residual(gen, &p);
    Ok(StationarySolution { p, residual, ..sol })
}

fn solve_irreducible(gen: &SparseGenerator, levels: Option<&[i64]>, opts: &SolverOptions) -> Result<StationarySolution> {
    let n = gen.dim();
    if n == 1 {
        return Ok(StationarySolution {
            p: vec![1.0],
            residual: 0.0,
            iterations: 0,
            method: SolveMethod::Dense,
        });
    }
    if n <= DENSE_LIMIT {
        let p = dense_solve(gen)?;
        let residual = scaled_residual(gen, &p);
        return Ok(StationarySolution {
            p,
            residual,
            iterations: 1,
            method: SolveMethod::Dense,
        });
    }
    if let Some(l) = levels {
        if let Some(agg) = Aggregation::new(gen, l)? {
            return agg.solve(opts);
        }
    }
    gauss_seidel(gen, opts)
}

/// `‖Q p‖₂ / (Λ ‖p‖₂)`.
pub fn scaled_residual(gen: &SparseGenerator, p: &[f64]) -> f64 {
    let mut r = vec![0.0; gen.dim()];
    gen.apply(p, &mut r);
    let lambda = gen.max_rate();
    let norm_p = l2(p);
    if lambda == 0.0 || norm_p == 0.0 {
        return 0.0;
    }
    l2(&r) / (lambda * norm_p)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(p: &mut [f64]) -> Result<()> {
    for v in p.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = p.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidArgument(format!("stationary vector has total mass {total}")));
    }
    p.iter_mut().for_each(|v| *v /= total);
    Ok(())
}

// ---------------------------------------------------------------------------
// Irreducibility

/// States of the unique closed communicating class.
fn closed_class(gen: &SparseGenerator) -> Result<Vec<usize>> {
    let (comp, count) = components(gen);
    let mut closed = vec![true; count];
    for i in 0..gen.dim() {
        for (j, _) in gen.row(i) {
            if comp[i] != comp[j] {
                closed[comp[j] as usize] = false;
            }
        }
    }
    let classes: Vec<usize> = (0..count).filter(|&c| closed[c]).collect();
    if classes.len() != 1 {
        return Err(Error::Reducible {
            closed_classes: classes.len(),
        });
    }
    let c = classes[0] as u32;
    Ok((0..gen.dim()).filter(|&i| comp[i] == c).collect())
}

/// Strongly connected components (iterative Tarjan) of the transition graph.
/// Incoming rows are walked, i.e. the reversed graph, which has the same
/// components.
fn components(gen: &SparseGenerator) -> (Vec<u32>, usize) {
    const NONE: u32 = u32::MAX;
    let n = gen.dim();
    let mut index = vec![NONE; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![NONE; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut call: Vec<(u32, usize)> = Vec::new();
    let mut next_index = 0u32;
    let mut count = 0u32;

    for root in 0..n {
        if index[root] != NONE {
            continue;
        }
        call.push((root as u32, gen.row_ptr[root]));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root as u32);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let v = v as usize;
            if *pos < gen.row_ptr[v + 1] {
                let w = gen.cols[*pos] as usize;
                *pos += 1;
                if index[w] == NONE {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w as u32);
                    on_stack[w] = true;
                    call.push((w as u32, gen.row_ptr[w]));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                let parent = parent as usize;
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack") as usize;
                    on_stack[w] = false;
                    comp[w] = count;
                    if w == v {
                        break;
                    }
                }
                count += 1;
            }
        }
    }
    (comp, count as usize)
}

// ---------------------------------------------------------------------------
// Dense solve

/// Replaces the last balance equation by `Σ p = 1` and solves with partial
/// pivoting.
fn dense_solve(gen: &SparseGenerator) -> Result<Vec<f64>> {
    let n = gen.dim();
    let mut a = vec![0.0; n * n];
    for i in 0..n - 1 {
        a[i * n + i] = gen.diagonal[i];
        for (j, r) in gen.row(i) {
            a[i * n + j] += r;
        }
    }
    a[(n - 1) * n..].fill(1.0);
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;

    for k in 0..n {
        let (piv, max) = (k..n)
            .map(|r| (r, a[r * n + k].abs()))
            .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        if max == 0.0 {
            return Err(Error::Reducible { closed_classes: 0 });
        }
        if piv != k {
            for c in 0..n {
                a.swap(k * n + c, piv * n + c);
            }
            b.swap(k, piv);
        }
        let pivot = a[k * n + k];
        for r in k + 1..n {
            let l = a[r * n + k] / pivot;
            if l != 0.0 {
                for c in k + 1..n {
                    a[r * n + c] -= l * a[k * n + c];
                }
                b[r] -= l * b[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| a[k * n + c] * x[c]).sum();
        x[k] = (b[k] - s) / a[k * n + k];
    }
    normalize(&mut x)?;
    Ok(x)
}

// ---------------------------------------------------------------------------
// Point Gauss–Seidel

fn gauss_seidel(gen: &SparseGenerator, opts: &SolverOptions) -> Result<StationarySolution> {
    let n = gen.dim();
    let mut p = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        for i in 0..n {
            let inflow: f64 = gen.row(i).map(|(j, a)| a * p[j]).sum();
            p[i] = inflow / -gen.diagonal[i];
        }
        normalize(&mut p)?;
        if it % 10 == 0 || it == opts.max_iterations {
            residual = scaled_residual(gen, &p);
            if residual <= opts.tol {
                return Ok(StationarySolution {
                    p,
                    residual,
                    iterations: it,
                    method: SolveMethod::GaussSeidel,
                });
            }
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        residual,
    })
}

// ---------------------------------------------------------------------------
// Iterative aggregation–disaggregation over levels

/// LU factors of a banded matrix without pivoting, row-major band storage.
struct BandLu {
    n: usize,
    b: usize,
    a: Vec<f64>,
}

impl BandLu {
    fn width(&self) -> usize {
        2 * self.b + 1
    }

    fn at(&mut self, r: usize, c: usize) -> &mut f64 {
        let w = self.width();
        &mut self.a[r * w + self.b + c - r]
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.width() + self.b + c - r]
    }

    fn factor(&mut self) -> Result<()> {
        let (n, b) = (self.n, self.b);
        for k in 0..n {
            let pivot = self.get(k, k);
            if !(pivot.abs() > 0.0) {
                return Err(Error::Reducible { closed_classes: 0 });
            }
            for r in k + 1..n.min(k + b + 1) {
                let l = self.get(r, k) / pivot;
                *self.at(r, k) = l;
                if l != 0.0 {
                    for c in k + 1..n.min(k + b + 1) {
                        let u = self.get(k, c);
                        *self.at(r, c) -= l * u;
                    }
                }
            }
        }
        Ok(())
    }

    fn solve(&self, x: &mut [f64]) {
        let (n, b) = (self.n, self.b);
        for r in 0..n {
            let mut s = x[r];
            for c in r.saturating_sub(b)..r {
                s -= self.get(r, c) * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in r + 1..n.min(r + b + 1) {
                s -= self.get(r, c) * x[c];
            }
            x[r] = s / self.get(r, r);
        }
    }
}

struct Aggregation<'a> {
    gen: &'a SparseGenerator,
    /// States grouped by level, ascending level, ascending index within.
    order: Vec<usize>,
    start: Vec<usize>,
    level_of: Vec<u32>,
    pos: Vec<u32>,
    up: Vec<f64>,
    down: Vec<f64>,
    blocks: Vec<BandLu>,
}

impl<'a> Aggregation<'a> {
    /// `None` when the level structure does not suit the method.
    fn new(gen: &'a SparseGenerator, levels: &[i64]) -> Result<Option<Self>> {
        let n = gen.dim();
        let lo = *levels.iter().min().expect("non-empty");
        let hi = *levels.iter().max().expect("non-empty");
        let count = (hi - lo + 1) as usize;
        if count < 2 || count > n {
            return Ok(None);
        }
        let mut start = vec![0usize; count + 1];
        for &l in levels {
            start[(l - lo) as usize + 1] += 1;
        }
        if start[1..].contains(&0) {
            return Ok(None);
        }
        for k in 0..count {
            start[k + 1] += start[k];
        }
        let mut order = vec![0usize; n];
        let mut fill = start.clone();
        let mut level_of = vec![0u32; n];
        let mut pos = vec![0u32; n];
        for (i, &l) in levels.iter().enumerate() {
            let k = (l - lo) as usize;
            level_of[i] = k as u32;
            pos[i] = (fill[k] - start[k]) as u32;
            order[fill[k]] = i;
            fill[k] += 1;
        }

        let mut up = vec![0.0; n];
        let mut down = vec![0.0; n];
        let mut band = vec![0usize; count];
        for i in 0..n {
            let li = level_of[i];
            for (j, a) in gen.row(i) {
                let lj = level_of[j];
                if li == lj + 1 {
                    up[j] += a;
                } else if lj == li + 1 {
                    down[j] += a;
                } else if li == lj {
                    let d = (pos[i] as i64 - pos[j] as i64).unsigned_abs() as usize;
                    band[li as usize] = band[li as usize].max(d);
                } else {
                    return Ok(None);
                }
            }
        }
        if band.iter().any(|&b| b > MAX_BANDWIDTH) {
            return Ok(None);
        }

        let mut blocks = Vec::with_capacity(count);
        for k in 0..count {
            let m = start[k + 1] - start[k];
            let b = band[k].min(m.saturating_sub(1));
            let mut lu = BandLu {
                n: m,
                b,
                a: vec![0.0; m * (2 * b + 1)],
            };
            for (r, &i) in order[start[k]..start[k + 1]].iter().enumerate() {
                *lu.at(r, r) = -gen.diagonal[i];
                for (j, a) in gen.row(i) {
                    if level_of[j] as usize == k {
                        *lu.at(r, pos[j] as usize) -= a;
                    }
                }
            }
            lu.factor()?;
            blocks.push(lu);
        }
        Ok(Some(Self {
            gen,
            order,
            start,
            level_of,
            pos,
            up,
            down,
            blocks,
        }))
    }

    fn levels(&self) -> usize {
        self.blocks.len()
    }

    fn states(&self, k: usize) -> &[usize] {
        &self.order[self.start[k]..self.start[k + 1]]
    }

    /// Log level masses of the tridiagonal aggregated chain given the
    /// conditional distributions `cond` (indexed like `order`).
    fn aggregate(&self, cond: &[f64]) -> Result<Vec<f64>> {
        let count = self.levels();
        let mut up = vec![0.0; count];
        let mut down = vec![0.0; count];
        for k in 0..count {
            for (r, &i) in self.states(k).iter().enumerate() {
                let c = cond[self.start[k] + r];
                up[k] += c * self.up[i];
                down[k] += c * self.down[i];
            }
        }
        let mut ln_m = vec![0.0; count];
        for k in 0..count - 1 {
            ln_m[k + 1] = if up[k] == 0.0 {
                f64::NEG_INFINITY
            } else if down[k + 1] > 0.0 {
                ln_m[k] + up[k].ln() - down[k + 1].ln()
            } else {
                return Err(Error::Reducible { closed_classes: 0 });
            };
        }
        let max = ln_m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = ln_m.iter().map(|l| (l - max).exp()).sum();
        let shift = max + total.ln();
        ln_m.iter_mut().for_each(|l| *l -= shift);
        Ok(ln_m)
    }

    /// One forward block Gauss–Seidel sweep in scaled form: level `k` is
    /// stored as `exp(ln_m[k]) · cond_k`.
    fn sweep(&self, ln_m: &mut [f64], cond: &mut [f64]) {
        let gen = self.gen;
        let mut buf = Vec::new();
        for k in 0..self.levels() {
            if ln_m[k] == f64::NEG_INFINITY {
                continue;
            }
            let states = self.states(k);
            buf.clear();
            buf.resize(states.len(), 0.0);
            for (r, &i) in states.iter().enumerate() {
                let mut s = 0.0;
                for (j, a) in gen.row(i) {
                    let l = self.level_of[j] as usize;
                    if l != k {
                        let w = (ln_m[l] - ln_m[k]).exp();
                        s += a * w * cond[self.start[l] + self.pos[j] as usize];
                    }
                }
                buf[r] = s;
            }
            self.blocks[k].solve(&mut buf);
            let total: f64 = buf.iter().sum();
            if total > 0.0 && total.is_finite() && buf.iter().all(|v| *v >= 0.0) {
                let c = &mut cond[self.start[k]..self.start[k + 1]];
                for (dst, v) in c.iter_mut().zip(&buf) {
                    *dst = v / total;
                }
                ln_m[k] += total.ln();
            }
        }
    }

    fn expand(&self, ln_m: &[f64], cond: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.gen.dim()];
        for k in 0..self.levels() {
            let m = ln_m[k].exp();
            for (r, &i) in self.states(k).iter().enumerate() {
                p[i] = m * cond[self.start[k] + r];
            }
        }
        p
    }

    fn solve(&self, opts: &SolverOptions) -> Result<StationarySolution> {
        let mut cond = vec![0.0; self.gen.dim()];
        for k in 0..self.levels() {
            let m = (self.start[k + 1] - self.start[k]) as f64;
            cond[self.start[k]..self.start[k + 1]].fill(1.0 / m);
        }
        let mut residual = f64::INFINITY;
        for it in 1..=opts.max_iterations {
            let mut ln_m = self.aggregate(&cond)?;
            self.sweep(&mut ln_m, &mut cond);
            let ln_m = self.aggregate(&cond)?;
            let mut p = self.expand(&ln_m, &cond);
            normalize(&mut p)?;
            residual = scaled_residual(self.gen, &p);
            if residual <= opts.tol {
                return Ok(StationarySolution {
                    p,
                    residual,
                    iterations: it,
                    method: SolveMethod::Aggregation,
                });
            }
        }
        Err(Error::NotConverged {
            iterations: opts.max_iterations,
            residual,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Birth–death chain on `0..n` with birth `b` and death `d·x`.
    fn chain(n: usize, b: f64, d: f64) -> SparseGenerator {
        let mut t = Vec::new();
        for x in 0..n {
            if x + 1 < n {
                t.push((x + 1, x, b));
            }
            if x > 0 {
                t.push((x - 1, x, d * x as f64));
            }
        }
        SparseGenerator::from_transitions(n, &t).unwrap()
    }

    /// Truncated Poisson by the product formula.
    fn truncated_poisson(n: usize, lambda: f64) -> Vec<f64> {
        let mut p = vec![1.0; n];
        for x in 1..n {
            p[x] = p[x - 1] * lambda / x as f64;
        }
        let s: f64 = p.iter().sum();
        p.iter().map(|v| v / s).collect()
    }

    #[test]
    fn three_state_chain() {
        let (beta, delta) = (2.0, 3.0);
        let sol = stationary_distribution(&chain(3, beta, delta), 1e-12).unwrap();
        let w = [1.0, beta / delta, beta * beta / (2.0 * delta * delta)];
        let s: f64 = w.iter().sum();
        for (p, w) in sol.p.iter().zip(w) {
            assert!((p - w / s).abs() < 1e-12);
        }
        assert_eq!(sol.method, SolveMethod::Dense);
    }

    #[test]
    fn gauss_seidel_on_long_chain() {
        let gen = chain(2500, 30.0, 1.0);
        let sol = stationary_distribution(&gen, 1e-12).unwrap();
        assert_eq!(sol.method, SolveMethod::GaussSeidel);
        let exact = truncated_poisson(2500, 30.0);
        let err = sol.p.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(sol.residual <= 1e-12);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn reducible_generator_is_rejected() {
        let gen = SparseGenerator::from_transitions(2, &[]).unwrap();
        assert!(matches!(
            stationary_distribution(&gen, 1e-12),
            Err(Error::Reducible { closed_classes: 2 })
        ));
        let two = SparseGenerator::from_transitions(4, &[(1, 0, 1.0), (0, 1, 1.0), (3, 2, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(stationary_distribution(&two, 1e-12).is_err());
    }

    #[test]
    fn transient_states_get_no_mass() {
        // 0 → 1 ⇄ 2
        let gen = SparseGenerator::from_transitions(3, &[(1, 0, 1.0), (2, 1, 2.0), (1, 2, 1.0)]).unwrap();
        let sol = stationary_distribution(&gen, 1e-12).unwrap();
        assert_eq!(sol.p[0], 0.0);
        assert!((sol.p[1] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn tarjan_handles_deep_chain() {
        let gen = chain(200_000, 5.0, 1.0);
        let (comp, count) = components(&gen);
        assert_eq!(count, 1);
        assert!(comp.iter().all(|&c| c == 0));
    }

    #[test]
    fn band_lu_matches_dense() {
        // Column diagonally dominant pentadiagonal matrix.
        let n = 7;
        let b = 2;
        let mut lu = BandLu { n, b, a: vec![0.0; n * 5] };
        let mut dense = vec![vec![0.0; n]; n];
        for r in 0..n {
            for c in r.saturating_sub(b)..n.min(r + b + 1) {
                let v = if r == c { 10.0 + r as f64 } else { -1.0 - 0.1 * (r + 2 * c) as f64 / 7.0 };
                *lu.at(r, c) = v;
                dense[r][c] = v;
            }
        }
        lu.factor().unwrap();
        let x_true: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let mut rhs: Vec<f64> = (0..n).map(|r| (0..n).map(|c| dense[r][c] * x_true[c]).sum()).collect();
        lu.solve(&mut rhs);
        for (a, b) in rhs.iter().zip(&x_true) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
