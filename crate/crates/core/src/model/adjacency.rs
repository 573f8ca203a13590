use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::QuadraticLocal;
use crate::error::{Error, Result};

/// Norm applied to each parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    /// Entrywise sum of absolute values.
    L1,
    /// Euclidean for vectors, spectral (induced 2-norm) for matrices.
    L2,
    /// Entrywise Euclidean.
    Frobenius,
    /// Entrywise maximum absolute value.
    Linf,
}

impl Norm {
    pub fn of(self, m: &DMatrix<f64>) -> f64 {
        if m.is_empty() {
            return 0.0;
        }
        match self {
            Norm::L1 => m.iter().map(|x| x.abs()).sum(),
            Norm::Frobenius => m.norm(),
            Norm::Linf => m.iter().fold(0.0, |a, x| a.max(x.abs())),
            Norm::L2 => {
                if m.ncols() == 1 || m.nrows() == 1 {
                    m.norm()
                } else {
                    m.clone().svd(false, false).singular_values.max()
                }
            }
        }
    }
}

/// The four parameter blocks of a local quadratic problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Hessian,
    Linear,
    Constraints,
    Rhs,
}

const BLOCKS: [Block; 4] = [
    Block::Hessian,
    Block::Linear,
    Block::Constraints,
    Block::Rhs,
];

/// Per-entry scale factors marking the private entries of each block
/// (row-major). `None` means every entry has scale 1; a zero entry is
/// excluded from the distance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Masks {
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub hessian: Option<Vec<f64>>,
    #[serde(rename = "h", default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<f64>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<Vec<f64>>,
    #[serde(rename = "c", default, skip_serializing_if = "Option::is_none")]
    pub rhs: Option<Vec<f64>>,
}

impl Masks {
    fn get(&self, b: Block) -> Option<&Vec<f64>> {
        match b {
            Block::Hessian => self.hessian.as_ref(),
            Block::Linear => self.linear.as_ref(),
            Block::Constraints => self.constraints.as_ref(),
            Block::Rhs => self.rhs.as_ref(),
        }
    }
}

/// Weighted block-norm distance between two local problems:
/// `a1‖ΔH‖ + a2‖Δh‖ + a3‖ΔC‖ + a4‖Δc‖`, restricted to masked entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyMetric {
    pub weights: [f64; 4],
    pub norm: Norm,
    #[serde(default)]
    pub masks: Masks,
}

fn block_of(p: &QuadraticLocal, b: Block) -> DMatrix<f64> {
    match b {
        Block::Hessian => p.hessian().clone(),
        Block::Linear => col(p.linear()),
        Block::Constraints => p.constraint_matrix().clone(),
        Block::Rhs => col(p.constraint_rhs()),
    }
}

fn col(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

impl AdjacencyMetric {
    pub fn new(weights: [f64; 4], norm: Norm) -> Self {
        AdjacencyMetric {
            weights,
            norm,
            masks: Masks::default(),
        }
    }

    /// `‖h − h'‖₂` only.
    pub fn linear_only() -> Self {
        Self::new([0.0, 1.0, 0.0, 0.0], Norm::L2)
    }

    /// `‖H − H'‖₂` only.
    pub fn hessian_only() -> Self {
        Self::new([1.0, 0.0, 0.0, 0.0], Norm::L2)
    }

    pub fn with_masks(mut self, masks: Masks) -> Self {
        self.masks = masks;
        self
    }

    pub fn weight(&self, b: Block) -> f64 {
        self.weights[b as usize]
    }

    pub fn validate(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            issues.push("adjacency weights must be finite and nonnegative".to_string());
        }
        if !self.weights.iter().any(|w| *w > 0.0) {
            issues.push("at least one adjacency weight must be positive".to_string());
        }
        for b in BLOCKS {
            if let Some(m) = self.masks.get(b) {
                if m.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    issues.push(format!("mask for {b:?} has negative or non-finite entries"));
                }
            }
        }
        issues
    }

    fn masked(&self, b: Block, m: DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self.masks.get(b) {
            None => Ok(m),
            Some(mask) => {
                if mask.len() != m.len() {
                    return Err(Error::Dimension(format!(
                        "mask for {b:?} has {} entries, block has {}",
                        mask.len(),
                        m.len()
                    )));
                }
                let scale = DMatrix::from_row_slice(m.nrows(), m.ncols(), mask);
                Ok(m.component_mul(&scale))
            }
        }
    }

    /// True when block `b` can contribute to the distance.
    fn block_active(&self, b: Block, p: &QuadraticLocal) -> bool {
        self.weight(b) > 0.0
            && block_of(p, b).len() > 0
            && self.masks.get(b).is_none_or(|m| m.iter().any(|x| *x > 0.0))
    }

    pub fn distance(&self, p: &QuadraticLocal, q: &QuadraticLocal) -> Result<f64> {
        if p.dim() != q.dim() || p.rows() != q.rows() {
            return Err(Error::Dimension(format!(
                "problems have shapes ({}, {}) and ({}, {})",
                p.dim(),
                p.rows(),
                q.dim(),
                q.rows()
            )));
        }
        let mut total = 0.0;
        for b in BLOCKS {
            let w = self.weight(b);
            if w == 0.0 {
                continue;
            }
            let diff = self.masked(b, block_of(p, b) - block_of(q, b))?;
            total += w * self.norm.of(&diff);
        }
        Ok(total)
    }

    /// Upper bound on `‖H − H'‖₂` over the unit ball.
    pub fn hessian_spectral_radius(&self, p: &QuadraticLocal) -> f64 {
        if !self.block_active(Block::Hessian, p) {
            return 0.0;
        }
        let n = p.dim() as f64;
        let (min_scale, uniform) = match &self.masks.hessian {
            None => (1.0, true),
            Some(m) => {
                let pos = m.iter().copied().filter(|x| *x > 0.0);
                let min = pos.clone().fold(f64::INFINITY, f64::min);
                let max = pos.fold(0.0, f64::max);
                (min, min == max && m.iter().all(|x| *x > 0.0))
            }
        };
        let factor = match self.norm {
            Norm::L1 | Norm::Frobenius => 1.0,
            Norm::L2 if uniform => 1.0,
            Norm::L2 => n.sqrt(),
            Norm::Linf => n,
        };
        factor / (self.weight(Block::Hessian) * min_scale)
    }

    /// Upper bound on `‖h − h'‖₂` over the unit ball.
    pub fn linear_radius(&self, p: &QuadraticLocal) -> f64 {
        if !self.block_active(Block::Linear, p) {
            return 0.0;
        }
        let (min_scale, active) = match &self.masks.linear {
            None => (1.0, p.dim()),
            Some(m) => (
                m.iter()
                    .copied()
                    .filter(|x| *x > 0.0)
                    .fold(f64::INFINITY, f64::min),
                m.iter().filter(|x| **x > 0.0).count(),
            ),
        };
        let factor = match self.norm {
            Norm::Linf => (active as f64).sqrt(),
            _ => 1.0,
        };
        factor / (self.weight(Block::Linear) * min_scale)
    }

    /// True when the constraint data `C`, `c` can change inside the ball.
    pub fn touches_constraints(&self, p: &QuadraticLocal) -> bool {
        self.block_active(Block::Constraints, p) || self.block_active(Block::Rhs, p)
    }

    /// Draws `P'` with `distance(P, P') ≤ 1`.
    ///
    /// A uniformly random direction is drawn for every active block and
    /// normalized in the block norm; a radius `r ~ U[0,1]` is split across
    /// blocks by a uniform point on the simplex. Fails with `DegenerateBall`
    /// when the ball contains non-positive-definite Hessians.
    pub fn perturb<R: Rng + ?Sized>(
        &self,
        p: &QuadraticLocal,
        rng: &mut R,
    ) -> Result<QuadraticLocal> {
        let issues = self.validate();
        if !issues.is_empty() {
            return Err(Error::InvalidArgument(issues.join("; ")));
        }
        let radius = self.hessian_spectral_radius(p);
        if radius > 0.0 && p.lambda_min() <= radius {
            return Err(Error::DegenerateBall(format!(
                "λ_min = {:.4} does not exceed the Hessian radius {:.4}",
                p.lambda_min(),
                radius
            )));
        }
        self.draw(p, rng)
    }

    /// Like `perturb`, but rejection-samples draws whose Hessian is not
    /// positive definite instead of refusing degenerate balls.
    pub fn perturb_truncated<R: Rng + ?Sized>(
        &self,
        p: &QuadraticLocal,
        rng: &mut R,
        max_tries: usize,
    ) -> Result<QuadraticLocal> {
        let issues = self.validate();
        if !issues.is_empty() {
            return Err(Error::InvalidArgument(issues.join("; ")));
        }
        for _ in 0..max_tries {
            match self.draw(p, rng) {
                Ok(q) => return Ok(q),
                Err(Error::Validation(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::DegenerateBall(format!(
            "no positive-definite draw in {max_tries} tries"
        )))
    }

    fn draw<R: Rng + ?Sized>(&self, p: &QuadraticLocal, rng: &mut R) -> Result<QuadraticLocal> {
        let active: Vec<Block> = BLOCKS
            .into_iter()
            .filter(|&b| self.block_active(b, p))
            .collect();
        if active.is_empty() {
            return Ok(p.clone());
        }
        let r: f64 = rng.random();
        // uniform point on the simplex via normalized exponentials
        let mut split: Vec<f64> = active
            .iter()
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let total: f64 = split.iter().sum();
        split.iter_mut().for_each(|s| *s /= total);

        let mut blocks: Vec<DMatrix<f64>> = BLOCKS.iter().map(|&b| block_of(p, b)).collect();
        for (b, share) in active.iter().zip(split) {
            let base = &blocks[*b as usize];
            let dir = self.direction(*b, base.nrows(), base.ncols(), rng)?;
            let n = self.norm.of(&self.masked(*b, dir.clone())?);
            if n == 0.0 {
                continue;
            }
            let step = r * share / (self.weight(*b) * n);
            blocks[*b as usize] = base + dir * step;
        }
        let [hm, hv, cm, cv]: [DMatrix<f64>; 4] = blocks.try_into().expect("four blocks");
        QuadraticLocal::new(
            hm,
            DVector::from_column_slice(hv.as_slice()),
            cm,
            DVector::from_column_slice(cv.as_slice()),
        )
    }

    fn direction<R: Rng + ?Sized>(
        &self,
        b: Block,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let mask = self.masks.get(b);
        let included = |r: usize, c: usize| mask.is_none_or(|m| m[r * cols + c] > 0.0);
        if let Some(m) = mask {
            if m.len() != rows * cols {
                return Err(Error::Dimension(format!(
                    "mask for {b:?} has {} entries, block has {}",
                    m.len(),
                    rows * cols
                )));
            }
        }
        let mut d = DMatrix::zeros(rows, cols);
        if b == Block::Hessian {
            for r in 0..rows {
                for c in r..cols {
                    if included(r, c) || included(c, r) {
                        let x: f64 = StandardNormal.sample(rng);
                        d[(r, c)] = x;
                        d[(c, r)] = x;
                    }
                }
            }
        } else {
            for r in 0..rows {
                for c in 0..cols {
                    if included(r, c) {
                        d[(r, c)] = StandardNormal.sample(rng);
                    }
                }
            }
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;

    fn local(h: &[f64], lin: &[f64]) -> QuadraticLocal {
        let n = lin.len();
        QuadraticLocal::unconstrained(
            DMatrix::from_row_slice(n, n, h),
            DVector::from_column_slice(lin),
        )
        .unwrap()
    }

    fn boxed(h: &[f64], lin: &[f64], c: &[f64]) -> QuadraticLocal {
        let n = lin.len();
        let mut cm = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            cm[(2 * i, i)] = 1.0;
            cm[(2 * i + 1, i)] = -1.0;
        }
        QuadraticLocal::new(
            DMatrix::from_row_slice(n, n, h),
            DVector::from_column_slice(lin),
            cm,
            DVector::from_column_slice(c),
        )
        .unwrap()
    }

    #[test]
    fn identical_problems_have_zero_distance() {
        let p = local(&[2.0, 0.0, 0.0, 1.0], &[1.0, 2.0]);
        let m = AdjacencyMetric::new([1.0, 1.0, 1.0, 1.0], Norm::L2);
        assert_eq!(m.distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn single_entry_l1() {
        let p = local(&[1.0, 0.0, 0.0, 1.0], &[1.0, 2.0]);
        let q = local(&[1.0, 0.0, 0.0, 1.0], &[1.0, 3.0]);
        let m = AdjacencyMetric::new([0.0, 1.0, 0.0, 0.0], Norm::L1);
        assert_eq!(m.distance(&p, &q).unwrap(), 1.0);
    }

    #[test]
    fn spectral_norm_of_scaled_identity() {
        // ‖0.5·I₂‖₂ = 0.5 (the Frobenius value would be 0.5·√2)
        let p = local(&[2.0, 0.0, 0.0, 2.0], &[0.0, 0.0]);
        let q = local(&[2.5, 0.0, 0.0, 2.5], &[0.0, 0.0]);
        let m = AdjacencyMetric::new([1.0, 1.0, 1.0, 1.0], Norm::L2);
        assert!((m.distance(&p, &q).unwrap() - 0.5).abs() < 1e-12);
        let f = AdjacencyMetric::new([1.0, 1.0, 1.0, 1.0], Norm::Frobenius);
        assert!((f.distance(&p, &q).unwrap() - 0.5 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let p = local(&[1.0], &[0.0]);
        let q = local(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]);
        assert!(matches!(
            AdjacencyMetric::linear_only().distance(&p, &q),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn masked_entries_do_not_count() {
        let p = local(&[1.0, 0.0, 0.0, 1.0], &[1.0, 2.0]);
        let q = local(&[1.0, 0.0, 0.0, 1.0], &[5.0, 3.0]);
        let m = AdjacencyMetric::new([0.0, 1.0, 0.0, 0.0], Norm::L1).with_masks(Masks {
            linear: Some(vec![0.0, 1.0]),
            ..Masks::default()
        });
        assert_eq!(m.distance(&p, &q).unwrap(), 1.0);
    }

    #[test]
    fn empty_masks_leave_problem_unchanged() {
        let p = boxed(&[3.0, 0.0, 0.0, 3.0], &[1.0, 2.0], &[1.0, 1.0, 1.0, 1.0]);
        let m = AdjacencyMetric::new([1.0, 1.0, 1.0, 1.0], Norm::L2).with_masks(Masks {
            hessian: Some(vec![0.0; 4]),
            linear: Some(vec![0.0; 2]),
            constraints: Some(vec![0.0; 8]),
            rhs: Some(vec![0.0; 4]),
        });
        let mut rng = stream(1, Domain::Instance, 0, 0);
        let q = m.perturb(&p, &mut rng).unwrap();
        assert_eq!(m.distance(&p, &q).unwrap(), 0.0);
        assert_eq!(q.hessian(), p.hessian());
        assert_eq!(q.linear(), p.linear());
    }

    #[test]
    fn linear_only_changes_linear_term() {
        let p = boxed(&[3.0, 0.5, 0.5, 3.0], &[1.0, 2.0], &[1.0, 1.0, 1.0, 1.0]);
        let m = AdjacencyMetric::linear_only();
        let mut rng = stream(2, Domain::Instance, 0, 0);
        for _ in 0..100 {
            let q = m.perturb(&p, &mut rng).unwrap();
            assert_eq!(q.hessian(), p.hessian());
            assert_eq!(q.constraint_rhs(), p.constraint_rhs());
            assert!((q.linear() - p.linear()).norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn monte_carlo_draws_stay_in_unit_ball() {
        let p = boxed(&[4.0, 0.5, 0.5, 5.0], &[1.0, -2.0], &[1.0, 1.0, 2.0, 1.0]);
        let mut rng = stream(3, Domain::Instance, 0, 0);
        for norm in [Norm::L1, Norm::L2, Norm::Frobenius, Norm::Linf] {
            let m = AdjacencyMetric::new([2.0, 1.0, 1.0, 1.0], norm);
            let mut max: f64 = 0.0;
            for _ in 0..2500 {
                let q = m.perturb(&p, &mut rng).unwrap();
                max = max.max(m.distance(&p, &q).unwrap());
                assert!(q.lambda_min() > 0.0);
            }
            assert!(max <= 1.0 + 1e-12, "{norm:?}: {max}");
            assert!(max > 0.9, "{norm:?}: ball not explored ({max})");
        }
    }

    #[test]
    fn degenerate_ball_is_rejected() {
        let p = local(&[0.5], &[0.0]);
        let m = AdjacencyMetric::hessian_only();
        let mut rng = stream(4, Domain::Instance, 0, 0);
        assert!(matches!(
            m.perturb(&p, &mut rng),
            Err(Error::DegenerateBall(_))
        ));
        let q = m.perturb_truncated(&p, &mut rng, 1000).unwrap();
        assert!(q.lambda_min() > 0.0);
    }

    fn arb_local() -> impl Strategy<Value = QuadraticLocal> {
        (
            proptest::collection::vec(-1.0f64..1.0, 4),
            proptest::collection::vec(-3.0f64..3.0, 2),
            proptest::collection::vec(0.1f64..3.0, 4),
        )
            .prop_map(|(a, lin, c)| {
                let h = [3.0 + a[0], a[1], a[1], 3.0 + a[2]];
                let mut q = boxed(&h, &lin, &c);
                // perturb the constraint matrix too so every block differs
                let mut cm = q.constraint_matrix().clone();
                cm[(0, 1)] = a[3];
                q = QuadraticLocal::new(
                    q.hessian().clone(),
                    q.linear().clone(),
                    cm,
                    q.constraint_rhs().clone(),
                )
                .unwrap();
                q
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn distance_is_a_pseudometric(a in arb_local(), b in arb_local(), c in arb_local(), w in proptest::collection::vec(0.0f64..2.0, 4)) {
            for norm in [Norm::L1, Norm::L2, Norm::Frobenius, Norm::Linf] {
                let m = AdjacencyMetric::new([w[0] + 0.1, w[1], w[2], w[3]], norm);
                let ab = m.distance(&a, &b).unwrap();
                let ba = m.distance(&b, &a).unwrap();
                let bc = m.distance(&b, &c).unwrap();
                let ac = m.distance(&a, &c).unwrap();
                prop_assert!((ab - ba).abs() <= 1e-12);
                prop_assert!(ac <= ab + bc + 1e-12);
                prop_assert_eq!(m.distance(&a, &a).unwrap(), 0.0);
            }
        }
    }
}
