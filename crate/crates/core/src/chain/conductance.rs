use crate::augtree::{AugmentedTree, VertexId};
use crate::chain::{admissibility, ChainSpec, HorizontalRule};
use crate::error::{Error, Result};
use crate::ifs::WeightKind;

/// Edge conductances in CSR form; each vertex lists its parent, children and
/// horizontal neighbours in that order (the order of
/// [`AugmentedTree::neighbors`]).
#[derive(Debug, Clone)]
pub struct ConductanceTable {
    lambda: f64,
    /// `c(x, x⁻)`; zero at the root.
    up: Vec<f64>,
    offsets: Vec<usize>,
    targets: Vec<VertexId>,
    values: Vec<f64>,
    /// `m(x)`. Vertices of the deepest level also count their missing
    /// children, `c(x, x⁻)/λ`, so the return ratio holds there too.
    total: Vec<f64>,
}

impl ConductanceTable {
    pub fn new(tree: &AugmentedTree, spec: &ChainSpec) -> Result<Self> {
        if spec.weights.len() != tree.ifs().n_maps() {
            return Err(Error::Config("one weight per map is required".into()));
        }
        if spec.weights.kind() == WeightKind::Custom {
            let report = admissibility(tree, &spec.weights, spec.admissible_band);
            if !report.admissible {
                return Err(Error::NotAdmissible {
                    min: report.min_ratio,
                    max: report.max_ratio,
                    lo: spec.admissible_band.0,
                    hi: spec.admissible_band.1,
                });
            }
        }
        let lambda = spec.lambda;
        let up: Vec<f64> = (0..tree.len())
            .map(|x| {
                if x == tree.root() {
                    0.0
                } else {
                    spec.weights.product(&tree.word(x).symbols) * lambda.powi(-(tree.depth(x) as i32))
                }
            })
            .collect();
        let mut offsets = Vec::with_capacity(tree.len() + 1);
        let mut targets = Vec::new();
        let mut values = Vec::new();
        offsets.push(0);
        for x in 0..tree.len() {
            for y in tree.neighbors(x) {
                let c = if tree.parent(x) == Some(y) {
                    up[x]
                } else if tree.parent(y) == Some(x) {
                    up[y]
                } else {
                    match spec.horizontal_rule {
                        HorizontalRule::GeometricMean => (up[x] * up[y]).sqrt(),
                    }
                };
                targets.push(y);
                values.push(c);
            }
            offsets.push(targets.len());
        }
        let mut table = Self { lambda, up, offsets, targets, values, total: Vec::new() };
        table.total = table.totals(tree);
        Ok(table)
    }

    fn totals(&self, tree: &AugmentedTree) -> Vec<f64> {
        (0..tree.len())
            .map(|x| {
                let own: f64 = self.values[self.offsets[x]..self.offsets[x + 1]].iter().sum();
                if tree.depth(x) == tree.max_level() && x != tree.root() {
                    own + self.up[x] / self.lambda
                } else {
                    own
                }
            })
            .collect()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.up.len()
    }

    pub fn is_empty(&self) -> bool {
        self.up.is_empty()
    }

    /// `c(x, x⁻)`.
    pub fn up(&self, x: VertexId) -> f64 {
        self.up[x]
    }

    /// `m(x)`.
    pub fn total(&self, x: VertexId) -> f64 {
        self.total[x]
    }

    /// `(y, c(x, y))` for every neighbour `y` of `x`.
    pub fn edges(&self, x: VertexId) -> impl Iterator<Item = (VertexId, f64)> + '_ {
        let r = self.offsets[x]..self.offsets[x + 1];
        self.targets[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// `c(x, y)`, or zero if not adjacent.
    pub fn conductance(&self, x: VertexId, y: VertexId) -> f64 {
        self.edges(x).find(|&(z, _)| z == y).map_or(0.0, |(_, c)| c)
    }

    /// `P(x, y) = c(x, y)/m(x)`.
    pub fn transition(&self, x: VertexId, y: VertexId) -> f64 {
        self.conductance(x, y) / self.total[x]
    }

    fn slot(&self, x: VertexId, y: VertexId) -> Result<usize> {
        (self.offsets[x]..self.offsets[x + 1])
            .find(|&i| self.targets[i] == y)
            .ok_or_else(|| Error::Config(format!("vertices {x} and {y} are not adjacent")))
    }

    /// Multiplies `c(x, y)` by `factor` on the `x` side only, breaking symmetry.
    /// Exists to exercise the reversibility check.
    pub fn perturb(&mut self, tree: &AugmentedTree, x: VertexId, y: VertexId, factor: f64) -> Result<()> {
        let i = self.slot(x, y)?;
        self.values[i] *= factor;
        self.total = self.totals(tree);
        Ok(())
    }

    /// Multiplies `c(x, y) = c(y, x)` by `factor`, keeping symmetry.
    pub fn scale_edge(&mut self, tree: &AugmentedTree, x: VertexId, y: VertexId, factor: f64) -> Result<()> {
        let i = self.slot(x, y)?;
        let j = self.slot(y, x)?;
        self.values[i] *= factor;
        self.values[j] *= factor;
        if tree.parent(x) == Some(y) {
            self.up[x] *= factor;
        } else if tree.parent(y) == Some(x) {
            self.up[y] *= factor;
        }
        self.total = self.totals(tree);
        Ok(())
    }

    /// `max |c(x, y) − c(y, x)|` over all edges.
    pub fn reversibility_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for x in 0..self.len() {
            for (y, c) in self.edges(x) {
                if y > x {
                    worst = worst.max((c - self.conductance(y, x)).abs());
                }
            }
        }
        worst
    }
}
