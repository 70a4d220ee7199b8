//! Semi-Lagrangian transport of nodal fields and Gauss-point history between steps.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::element::{invert_isoparametric, shape_eval, Inversion, Point3};
use crate::material::MaterialPointState;
use crate::mesh::{bounds_of, GaussSubMesh, Mesh};

/// Smallest eigenvalue kept when repairing interpolated history tensors.
pub const SPD_FLOOR: f64 = 1e-8;

/// Bounding boxes of a set of hexahedral cells plus a uniform bin grid.
#[derive(Debug, Clone)]
pub struct LocationIndex {
    boxes: Vec<(Point3, Point3)>,
    origin: Point3,
    cell: Vector3<f64>,
    dims: [usize; 3],
    /// Candidate cells per bin, ascending.
    bins: Vec<Vec<u32>>,
    pad: f64,
}

impl LocationIndex {
    pub fn build(nodes: &[Point3], cells: &[[usize; 8]]) -> Self {
        let boxes: Vec<(Point3, Point3)> = cells.iter().map(|c| bounds_of(&c.map(|n| nodes[n]))).collect();
        let (lo, hi) = bounds_of(nodes);
        let span = hi - lo;
        let pad = 1e-9 * span.amax().max(1e-300);
        // roughly one cell per bin
        let n = cells.len().max(1) as f64;
        let vol = span.iter().map(|s| s.max(pad)).product::<f64>();
        let h = (vol / n).cbrt();
        let dims = [0, 1, 2].map(|i| ((span[i] / h).ceil() as usize).clamp(1, 4096));
        let cell = Vector3::from_fn(|i, _| (span[i] / dims[i] as f64).max(pad));
        let mut bins = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let mut idx = LocationIndex {
            boxes,
            origin: lo,
            cell,
            dims,
            bins: Vec::new(),
            pad,
        };
        for (c, (bl, bh)) in idx.boxes.iter().enumerate() {
            let a = idx.bin_of(&(bl - Vector3::repeat(pad)));
            let b = idx.bin_of(&(bh + Vector3::repeat(pad)));
            for k in a[2]..=b[2] {
                for j in a[1]..=b[1] {
                    for i in a[0]..=b[0] {
                        bins[i + dims[0] * (j + dims[1] * k)].push(c as u32);
                    }
                }
            }
        }
        idx.bins = bins;
        idx
    }

    fn bin_of(&self, p: &Point3) -> [usize; 3] {
        [0, 1, 2].map(|i| {
            let f = ((p[i] - self.origin[i]) / self.cell[i]).floor();
            (f.max(0.0) as usize).min(self.dims[i] - 1)
        })
    }

    /// Cells whose padded box contains `p`, ascending by id.
    pub fn candidates<'a>(&'a self, p: &'a Point3) -> impl Iterator<Item = usize> + 'a {
        let [i, j, k] = self.bin_of(p);
        let pad = self.pad;
        self.bins[i + self.dims[0] * (j + self.dims[1] * k)]
            .iter()
            .map(|&c| c as usize)
            .filter(move |&c| {
                let (lo, hi) = &self.boxes[c];
                (0..3).all(|d| p[d] >= lo[d] - pad && p[d] <= hi[d] + pad)
            })
    }

    /// The box of cell `c`.
    pub fn bounds(&self, c: usize) -> (Point3, Point3) {
        self.boxes[c]
    }
}

/// Finds the lowest-id cell containing `p` and the local coordinates there.
pub fn locate_point(
    nodes: &[Point3],
    cells: &[[usize; 8]],
    index: &LocationIndex,
    p: &Point3,
) -> Option<(usize, Vector3<f64>)> {
    for c in index.candidates(p) {
        let coords = cells[c].map(|n| nodes[n]);
        if let Inversion::Inside(xi) = invert_isoparametric(&coords, p) {
            return Some((c, xi));
        }
    }
    None
}

/// Interpolation stencils for transporting fields on one node set by a fixed shift.
#[derive(Debug, Clone)]
pub struct AdvectionPlan {
    /// Per target node: source node ids and weights, or `None` for inflow.
    stencils: Vec<Option<([usize; 8], [f64; 8])>>,
    pub n_inflow: usize,
}

impl AdvectionPlan {
    /// Each target point `x` draws from the upstream point `x − shift`.
    pub fn new(
        nodes: &[Point3],
        cells: &[[usize; 8]],
        index: &LocationIndex,
        targets: &[Point3],
        shift: &Vector3<f64>,
    ) -> Self {
        let stencils: Vec<_> = targets
            .par_iter()
            .map(|x| {
                let up = x - shift;
                locate_point(nodes, cells, index, &up).map(|(c, xi)| (cells[c], shape_eval(&xi).values))
            })
            .collect();
        let n_inflow = stencils.iter().filter(|s| s.is_none()).count();
        AdvectionPlan { stencils, n_inflow }
    }

    /// Identity plan (zero shift).
    pub fn identity(n: usize) -> Self {
        let mut ids = [0; 8];
        let mut w = [0.0; 8];
        w[0] = 1.0;
        AdvectionPlan {
            stencils: (0..n)
                .map(|i| {
                    ids[0] = i;
                    Some((ids, w))
                })
                .collect(),
            n_inflow: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    /// Transports `field`, writing `fill` at inflow targets.
    pub fn apply<T>(&self, field: &[T], fill: T) -> Vec<T>
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + Send + Sync,
    {
        self.stencils
            .iter()
            .map(|s| match s {
                Some((ids, w)) => {
                    let mut acc = field[ids[0]] * w[0];
                    for k in 1..8 {
                        if w[k] != 0.0 {
                            acc = acc + field[ids[k]] * w[k];
                        }
                    }
                    acc
                }
                None => fill,
            })
            .collect()
    }
}

/// Transports a nodal field on the ALE mesh by the frame displacement `shift = ∫w dt`.
pub fn advect_nodal_field(mesh: &Mesh, index: &LocationIndex, field: &[Vector3<f64>], shift: &Vector3<f64>) -> Vec<Vector3<f64>> {
    if *shift == Vector3::zeros() {
        return field.to_vec();
    }
    AdvectionPlan::new(&mesh.nodes, &mesh.elements, index, &mesh.nodes, shift).apply(field, Vector3::zeros())
}

/// Per-layer location indices and plans for the Gauss-point history.
#[derive(Debug, Clone)]
pub struct HistoryAdvector {
    indices: Vec<LocationIndex>,
}

impl HistoryAdvector {
    pub fn new(sub: &GaussSubMesh) -> Self {
        HistoryAdvector {
            indices: sub.layers.iter().map(|l| LocationIndex::build(&l.nodes, &l.cells)).collect(),
        }
    }

    /// Transports Gauss-point states (indexed `8 e + g`) by `shift`, layer by layer.
    /// Inflow points become virgin; interpolated tensors are repaired to stay SPD.
    pub fn advect(&self, sub: &GaussSubMesh, states: &[MaterialPointState], shift: &Vector3<f64>) -> Vec<MaterialPointState> {
        if *shift == Vector3::zeros() {
            return states.to_vec();
        }
        let mut by_subnode = vec![MaterialPointState::virgin(); states.len()];
        for (eg, &s) in sub.subnode_of.iter().enumerate() {
            by_subnode[s] = states[eg];
        }
        let mut moved = vec![MaterialPointState::virgin(); states.len()];
        for (layer, index) in sub.layers.iter().zip(&self.indices) {
            let range = layer.node_offset..layer.node_offset + layer.nodes.len();
            let plan = AdvectionPlan::new(&layer.nodes, &layer.cells, index, &layer.nodes, shift);
            let src: Vec<Cv> = by_subnode[range.clone()].iter().map(|s| Cv(s.cv)).collect();
            let out = plan.apply(&src, Cv(MaterialPointState::virgin().cv));
            for (dst, cv) in moved[range].iter_mut().zip(out) {
                *dst = repair_spd(MaterialPointState { cv: cv.0 });
            }
        }
        sub.subnode_of.iter().map(|&s| moved[s]).collect()
    }
}

#[derive(Clone, Copy)]
struct Cv([f64; 6]);

impl std::ops::Mul<f64> for Cv {
    type Output = Cv;
    fn mul(self, s: f64) -> Cv {
        Cv(self.0.map(|v| v * s))
    }
}

impl std::ops::Add for Cv {
    type Output = Cv;
    fn add(self, o: Cv) -> Cv {
        Cv(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }
}

/// Clamps the eigenvalues of a (symmetric) history tensor at [`SPD_FLOOR`].
pub fn repair_spd(s: MaterialPointState) -> MaterialPointState {
    if s.is_spd() {
        let m = s.to_matrix();
        let l = SymmetricEigen::new(m).eigenvalues.min();
        if l >= SPD_FLOOR {
            return s;
        }
    }
    let m = s.to_matrix();
    let sym = 0.5 * (m + m.transpose());
    let mut e = SymmetricEigen::new(sym);
    e.eigenvalues.iter_mut().for_each(|l| *l = l.max(SPD_FLOOR));
    let fixed: Matrix3<f64> = e.recompose();
    MaterialPointState::from_matrix(&(0.5 * (fixed + fixed.transpose())))
}

/// True when the frame moves further than the smallest element size in one step.
pub fn exceeds_cfl(mesh: &Mesh, shift: &Vector3<f64>) -> bool {
    (0..3).any(|i| shift[i].abs() > mesh.min_spacing(i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_gauss_submesh, build_layered_grid, AxisDivision, GridSpec, LayerSpec};

    fn grid() -> Mesh {
        build_layered_grid(&GridSpec::uniform_box([4.0, 2.0, 1.0], [8, 4, 2])).unwrap()
    }

    #[test]
    fn locates_centroid_and_nodes() {
        let m = grid();
        let idx = LocationIndex::build(&m.nodes, &m.elements);
        let c5 = m.element_coords(5).iter().sum::<Point3>() / 8.0;
        let (e, xi) = locate_point(&m.nodes, &m.elements, &idx, &c5).unwrap();
        assert_eq!(e, 5);
        assert!(xi.norm() < 1e-12);
        // a shared node resolves to the lowest incident element
        let n = m.elements[10][6];
        let (e, xi) = locate_point(&m.nodes, &m.elements, &idx, &m.nodes[n]).unwrap();
        let lowest = (0..m.n_elements()).find(|&k| m.elements[k].contains(&n)).unwrap();
        assert_eq!(e, lowest);
        assert!((xi.abs() - Vector3::repeat(1.0)).amax() < 1e-10);
        let out = Point3::new(4.0 + 1e-3, 1.0, 0.5);
        assert!(locate_point(&m.nodes, &m.elements, &idx, &out).is_none());
    }

    #[test]
    fn zero_shift_is_identity() {
        let m = grid();
        let idx = LocationIndex::build(&m.nodes, &m.elements);
        let f: Vec<_> = m.nodes.iter().map(|p| Vector3::new(p.x.sin(), p.y, p.z * p.x)).collect();
        assert_eq!(advect_nodal_field(&m, &idx, &f, &Vector3::zeros()), f);
    }

    #[test]
    fn whole_cell_shift_is_index_shift() {
        let m = grid();
        let idx = LocationIndex::build(&m.nodes, &m.elements);
        let f: Vec<_> = (0..m.n_nodes()).map(|i| Vector3::new(i as f64, -(i as f64), 0.5)).collect();
        let h = 0.5;
        let g = advect_nodal_field(&m, &idx, &f, &Vector3::new(h, 0.0, 0.0));
        let l = m.layout.as_ref().unwrap();
        for k in 0..3 {
            for j in 0..5 {
                for i in 0..9 {
                    let n = l.node_id(i, j, k);
                    if i == 0 {
                        assert_eq!(g[n], Vector3::zeros());
                    } else {
                        assert!((g[n] - f[l.node_id(i - 1, j, k)]).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn linear_field_is_exact() {
        let m = grid();
        let idx = LocationIndex::build(&m.nodes, &m.elements);
        let lin = |p: &Point3| Vector3::new(2.0 * p.x - p.y, 0.5 * p.z + 0.1 * p.x, 3.0);
        let f: Vec<_> = m.nodes.iter().map(lin).collect();
        let s = Vector3::new(-0.25, 0.1, 0.0);
        let g = advect_nodal_field(&m, &idx, &f, &s);
        for (n, p) in m.nodes.iter().enumerate() {
            let up = p - s;
            if up.x <= 4.0 && up.y >= 0.0 && up.y <= 2.0 {
                assert!((g[n] - lin(&up)).amax() < 1e-12);
            } else {
                assert_eq!(g[n], Vector3::zeros());
            }
        }
    }

    fn two_layer() -> Mesh {
        let mut spec = GridSpec::uniform_box([2.0, 1.0, 1.0], [4, 2, 2]);
        spec.layers = vec![
            LayerSpec {
                name: "top".into(),
                thickness: 0.4,
                division: AxisDivision::Uniform { count: 2 },
            },
            LayerSpec {
                name: "base".into(),
                thickness: 0.6,
                division: AxisDivision::Uniform { count: 2 },
            },
        ];
        build_layered_grid(&spec).unwrap()
    }

    #[test]
    fn history_stays_in_its_layer() {
        let m = two_layer();
        let sub = build_gauss_submesh(&m).unwrap();
        let adv = HistoryAdvector::new(&sub);
        let s_of = |layer: usize| {
            let f = if layer == 0 { 1.3 } else { 0.8 };
            MaterialPointState::from_matrix(&Matrix3::from_diagonal(&Vector3::new(f, 1.0 / f, 1.0)))
        };
        let states: Vec<_> = (0..8 * m.n_elements()).map(|eg| s_of(m.layer_of_element[eg / 8])).collect();
        for shift in [Vector3::new(-0.3, 0.0, 0.0), Vector3::new(0.0, 0.0, 0.2), Vector3::new(0.1, 0.05, -0.07)] {
            let out = adv.advect(&sub, &states, &shift);
            for (eg, s) in out.iter().enumerate() {
                let expect = s_of(m.layer_of_element[eg / 8]);
                let virgin = MaterialPointState::virgin();
                let same = s.cv.iter().zip(&expect.cv).all(|(a, b)| (a - b).abs() < 1e-14);
                assert!(same || *s == virgin, "mixed state {:?}", s.cv);
            }
        }
    }

    #[test]
    fn uniform_history_is_preserved() {
        let m = grid();
        let sub = build_gauss_submesh(&m).unwrap();
        let adv = HistoryAdvector::new(&sub);
        let s = MaterialPointState { cv: [1.1, 0.95, 0.97, 0.01, -0.02, 0.03] };
        let states = vec![s; 8 * m.n_elements()];
        let out = adv.advect(&sub, &states, &Vector3::new(0.0, 0.13, 0.0));
        let n_same = out.iter().filter(|o| o.cv.iter().zip(&s.cv).all(|(a, b)| (a - b).abs() < 1e-14)).count();
        let n_virgin = out.iter().filter(|o| **o == MaterialPointState::virgin()).count();
        assert_eq!(n_same + n_virgin, out.len());
        assert!(n_same > n_virgin);
    }

    #[test]
    fn repair_clamps_eigenvalues() {
        let bad = MaterialPointState { cv: [1.0, -0.5, 1.0, 0.0, 0.0, 0.0] };
        let fixed = repair_spd(bad);
        assert!(fixed.is_spd());
        assert!((fixed.cv[1] - SPD_FLOOR).abs() < 1e-15);
        let good = MaterialPointState { cv: [1.0, 2.0, 3.0, 0.1, 0.0, 0.0] };
        assert_eq!(repair_spd(good), good);
    }

    #[test]
    fn cfl_guard() {
        let m = grid();
        assert!(!exceeds_cfl(&m, &Vector3::new(0.4, 0.0, 0.0)));
        assert!(exceeds_cfl(&m, &Vector3::new(-0.6, 0.0, 0.0)));
    }
}
