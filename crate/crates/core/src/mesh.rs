//! Layered hexahedral grids in the moving reference frame, their boundary
//! sets and load patches, and the Gauss-point sub-meshes used to transport
//! history variables.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::element::{self, Point3, FACES};
use crate::error::{Error, Result};

/// Element distribution along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisDivision {
    /// `count` equal elements.
    Uniform { count: usize },
    /// Explicit element lengths [m]; must sum to the extent of the axis.
    Graded { spacing: Vec<f64> },
}

impl AxisDivision {
    fn spacing(&self, extent: f64, what: &str) -> Result<Vec<f64>> {
        let sp = match self {
            AxisDivision::Uniform { count } => {
                if *count == 0 {
                    return Err(Error::InvalidSpec(format!("{what}: element count must be positive")));
                }
                vec![extent / *count as f64; *count]
            }
            AxisDivision::Graded { spacing } => {
                if spacing.is_empty() {
                    return Err(Error::InvalidSpec(format!("{what}: empty spacing list")));
                }
                if let Some(h) = spacing.iter().find(|h| !(**h > 0.0) || !h.is_finite()) {
                    return Err(Error::InvalidSpec(format!("{what}: non-positive spacing {h}")));
                }
                let sum: f64 = spacing.iter().sum();
                if (sum - extent).abs() > 1e-9 * extent.max(1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "{what}: spacing sums to {sum} but extent is {extent}"
                    )));
                }
                spacing.clone()
            }
        };
        Ok(sp)
    }
}

/// One material layer of the grid. Layers are listed from the top surface down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub thickness: f64,
    pub division: AxisDivision,
}

/// Mesh sides, used for boundary conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    XMin,
    XMax,
    YMin,
    YMax,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 6] = [
        Side::XMin,
        Side::XMax,
        Side::YMin,
        Side::YMax,
        Side::Bottom,
        Side::Top,
    ];

    /// Local face id of an element touching this side.
    pub fn local_face(self) -> usize {
        match self {
            Side::XMin => 0,
            Side::XMax => 1,
            Side::YMin => 2,
            Side::YMax => 3,
            Side::Bottom => 4,
            Side::Top => 5,
        }
    }
}

/// Axis-aligned rectangle on the top surface, `[x0, x1] × [y0, y1]` [m].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn centered(cx: f64, cy: f64, sx: f64, sy: f64) -> Self {
        Rect {
            x0: cx - 0.5 * sx,
            x1: cx + 0.5 * sx,
            y0: cy - 0.5 * sy,
            y1: cy + 0.5 * sy,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Rect {
            x0: self.x0 + dx,
            x1: self.x1 + dx,
            y0: self.y0 + dy,
            y1: self.y1 + dy,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    pub fn intersect(&self, o: &Rect) -> Option<Rect> {
        let r = Rect {
            x0: self.x0.max(o.x0),
            x1: self.x1.min(o.x1),
            y0: self.y0.max(o.y0),
            y1: self.y1.min(o.y1),
        };
        (r.x1 > r.x0 && r.y1 > r.y0).then_some(r)
    }
}

/// Full description of a layered grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub origin: Point3,
    /// Extents along x, y, z [m].
    pub extent: [f64; 3],
    pub x: AxisDivision,
    pub y: AxisDivision,
    pub layers: Vec<LayerSpec>,
    pub fixed_sides: Vec<Side>,
    /// Footprints of loaded regions on the top surface.
    pub load_regions: Vec<Rect>,
}

impl GridSpec {
    /// Single-layer uniform box with every side except the top fully restrained.
    pub fn uniform_box(extent: [f64; 3], counts: [usize; 3]) -> Self {
        GridSpec {
            origin: Point3::zeros(),
            extent,
            x: AxisDivision::Uniform { count: counts[0] },
            y: AxisDivision::Uniform { count: counts[1] },
            layers: vec![LayerSpec {
                name: "layer0".into(),
                thickness: extent[2],
                division: AxisDivision::Uniform { count: counts[2] },
            }],
            fixed_sides: default_fixed_sides(),
            load_regions: Vec::new(),
        }
    }
}

pub fn default_fixed_sides() -> Vec<Side> {
    vec![Side::XMin, Side::XMax, Side::YMin, Side::YMax, Side::Bottom]
}

/// Reference to one element face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BoundaryFace {
    pub element: usize,
    pub face: usize,
}

/// A loaded region on the mesh boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePatch {
    pub faces: Vec<BoundaryFace>,
    /// The pressure acts on the part of each face inside this footprint.
    pub region: Rect,
    /// Index of the load (amplitude schedule) driving this patch.
    pub load: usize,
}

/// Tensor-product structure of a grid built by [`build_layered_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredLayout {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Node z coordinates from the bottom up.
    pub z: Vec<f64>,
    /// Element z-index range `[k0, k1)` for every layer (layer 0 is the top).
    pub layer_k_range: Vec<(usize, usize)>,
}

impl StructuredLayout {
    pub fn counts(&self) -> [usize; 3] {
        [self.x.len() - 1, self.y.len() - 1, self.z.len() - 1]
    }

    pub fn node_id(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.x.len() * (j + self.y.len() * k)
    }

    pub fn element_id(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.counts();
        i + nx * (j + ny * k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub nodes: Vec<Point3>,
    pub elements: Vec<[usize; 8]>,
    pub layer_of_element: Vec<usize>,
    pub layer_names: Vec<String>,
    /// Sorted, unique (node, direction) pairs.
    pub dirichlet_nodes: Vec<(usize, usize)>,
    pub load_patches: Vec<SurfacePatch>,
    pub layout: Option<StructuredLayout>,
}

fn coordinates(origin: f64, spacing: &[f64]) -> Vec<f64> {
    let mut c = Vec::with_capacity(spacing.len() + 1);
    let mut x = origin;
    c.push(x);
    for h in spacing {
        x += h;
        c.push(x);
    }
    c
}

/// Builds a structured, layered hexahedral grid.
pub fn build_layered_grid(spec: &GridSpec) -> Result<Mesh> {
    for (a, e) in spec.extent.iter().enumerate() {
        if !(*e > 0.0) || !e.is_finite() {
            return Err(Error::InvalidSpec(format!("extent along axis {a} must be positive, got {e}")));
        }
    }
    if spec.layers.is_empty() {
        return Err(Error::InvalidSpec("at least one layer is required".into()));
    }
    let hx = spec.x.spacing(spec.extent[0], "x")?;
    let hy = spec.y.spacing(spec.extent[1], "y")?;

    let total: f64 = spec.layers.iter().map(|l| l.thickness).sum();
    if (total - spec.extent[2]).abs() > 1e-9 * spec.extent[2].max(1.0) {
        return Err(Error::InvalidSpec(format!(
            "layer thicknesses sum to {total} but z extent is {}",
            spec.extent[2]
        )));
    }
    // z spacing from the bottom layer up
    let mut hz = Vec::new();
    let mut ranges = vec![(0, 0); spec.layers.len()];
    for (li, layer) in spec.layers.iter().enumerate().rev() {
        if !(layer.thickness > 0.0) {
            return Err(Error::InvalidSpec(format!("layer '{}' has non-positive thickness", layer.name)));
        }
        let sp = layer.division.spacing(layer.thickness, &format!("layer '{}'", layer.name))?;
        let k0 = hz.len();
        hz.extend(sp);
        ranges[li] = (k0, hz.len());
    }

    let layout = StructuredLayout {
        x: coordinates(spec.origin.x, &hx),
        y: coordinates(spec.origin.y, &hy),
        z: coordinates(spec.origin.z, &hz),
        layer_k_range: ranges,
    };
    let [nx, ny, nz] = layout.counts();

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push(Point3::new(layout.x[i], layout.y[j], layout.z[k]));
            }
        }
    }

    let mut elements = Vec::with_capacity(nx * ny * nz);
    let mut layer_of_element = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        let layer = layout
            .layer_k_range
            .iter()
            .position(|&(k0, k1)| k >= k0 && k < k1)
            .expect("every k belongs to a layer");
        for j in 0..ny {
            for i in 0..nx {
                let n = |di: usize, dj: usize, dk: usize| layout.node_id(i + di, j + dj, k + dk);
                elements.push([
                    n(0, 0, 0),
                    n(1, 0, 0),
                    n(1, 1, 0),
                    n(0, 1, 0),
                    n(0, 0, 1),
                    n(1, 0, 1),
                    n(1, 1, 1),
                    n(0, 1, 1),
                ]);
                layer_of_element.push(layer);
            }
        }
    }

    let mut fixed = BTreeSet::new();
    for side in &spec.fixed_sides {
        for node in side_nodes(&layout, *side) {
            for d in 0..3 {
                fixed.insert((node, d));
            }
        }
    }

    let mut mesh = Mesh {
        nodes,
        elements,
        layer_of_element,
        layer_names: spec.layers.iter().map(|l| l.name.clone()).collect(),
        dirichlet_nodes: fixed.into_iter().collect(),
        load_patches: Vec::new(),
        layout: Some(layout),
    };
    for (load, region) in spec.load_regions.iter().enumerate() {
        let patch = mesh.top_patch(*region, load);
        mesh.load_patches.push(patch);
    }
    mesh.validate()?;
    Ok(mesh)
}

fn side_nodes(layout: &StructuredLayout, side: Side) -> Vec<usize> {
    let (nx, ny, nz) = (layout.x.len(), layout.y.len(), layout.z.len());
    let mut out = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let on = match side {
                    Side::XMin => i == 0,
                    Side::XMax => i == nx - 1,
                    Side::YMin => j == 0,
                    Side::YMax => j == ny - 1,
                    Side::Bottom => k == 0,
                    Side::Top => k == nz - 1,
                };
                if on {
                    out.push(layout.node_id(i, j, k));
                }
            }
        }
    }
    out
}

impl Mesh {
    /// Assembles a mesh from raw parts (no structured layout, single layer,
    /// no constraints).
    pub fn from_parts(nodes: Vec<Point3>, elements: Vec<[usize; 8]>) -> Result<Self> {
        let n = elements.len();
        let mesh = Mesh {
            nodes,
            elements,
            layer_of_element: vec![0; n],
            layer_names: vec!["layer0".into()],
            dirichlet_nodes: Vec::new(),
            load_patches: Vec::new(),
            layout: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_names.len()
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    pub fn element_coords(&self, e: usize) -> [Point3; 8] {
        self.elements[e].map(|n| self.nodes[n])
    }

    /// Checks connectivity, Jacobians and layer stacking.
    pub fn validate(&self) -> Result<()> {
        if self.layer_of_element.len() != self.elements.len() {
            return Err(Error::InvalidSpec("layer tag count differs from element count".into()));
        }
        for (e, conn) in self.elements.iter().enumerate() {
            for (a, &n) in conn.iter().enumerate() {
                if n >= self.nodes.len() {
                    return Err(Error::InvalidSpec(format!("element {e} references missing node {n}")));
                }
                if conn[..a].contains(&n) {
                    return Err(Error::InvalidSpec(format!("element {e} repeats node {n}")));
                }
            }
            if self.layer_of_element[e] >= self.layer_names.len() {
                return Err(Error::InvalidSpec(format!("element {e} has unknown layer")));
            }
            let coords = self.element_coords(e);
            for s in element::gauss_shape_evals() {
                if let Err(Error::DegenerateElement { det_j, .. }) =
                    element::global_derivatives_of(&coords, s, 1.0)
                {
                    return Err(Error::DegenerateElement { element: e, det_j });
                }
            }
        }
        if let Some(layout) = &self.layout {
            // layers occupy disjoint, contiguous z ranges
            let mut ranges = layout.layer_k_range.clone();
            ranges.sort();
            for w in ranges.windows(2) {
                if w[0].1 != w[1].0 {
                    return Err(Error::InvalidSpec("layers interleave vertically".into()));
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding box of all nodes.
    pub fn bounds(&self) -> (Point3, Point3) {
        bounds_of(&self.nodes)
    }

    /// Top-surface faces overlapping `region`.
    pub fn top_patch(&self, region: Rect, load: usize) -> SurfacePatch {
        let mut faces = Vec::new();
        for (e, _) in self.elements.iter().enumerate() {
            let Some(face) = self.top_face_rect(e) else {
                continue;
            };
            if face.intersect(&region).is_some() {
                faces.push(BoundaryFace { element: e, face: 5 });
            }
        }
        SurfacePatch {
            faces,
            region,
            load,
        }
    }

    /// The xy-rectangle of an element's top face, if that face lies on the top surface.
    pub fn top_face_rect(&self, e: usize) -> Option<Rect> {
        let layout = self.layout.as_ref()?;
        let [nx, ny, nz] = layout.counts();
        let k = e / (nx * ny);
        if k != nz - 1 {
            return None;
        }
        let j = (e / nx) % ny;
        let i = e % nx;
        Some(Rect {
            x0: layout.x[i],
            x1: layout.x[i + 1],
            y0: layout.y[j],
            y1: layout.y[j + 1],
        })
    }

    /// Node ids of a local face, in outward-normal order.
    pub fn face_nodes(&self, f: BoundaryFace) -> [usize; 4] {
        FACES[f.face].map(|a| self.elements[f.element][a])
    }

    /// Smallest element edge length along `axis`.
    pub fn min_spacing(&self, axis: usize) -> f64 {
        if let Some(layout) = &self.layout {
            let c = match axis {
                0 => &layout.x,
                1 => &layout.y,
                _ => &layout.z,
            };
            return c.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        }
        self.elements
            .iter()
            .map(|conn| {
                let (lo, hi) = bounds_of(&conn.map(|n| self.nodes[n]));
                hi[axis] - lo[axis]
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Boolean mask over DOFs (`3 * node + dir`) marking constrained entries.
    pub fn constrained_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n_dofs()];
        for &(n, d) in &self.dirichlet_nodes {
            m[3 * n + d] = true;
        }
        m
    }
}

pub(crate) fn bounds_of(points: &[Point3]) -> (Point3, Point3) {
    let mut lo = Point3::repeat(f64::INFINITY);
    let mut hi = Point3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Gauss-point sub-mesh of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SubMeshLayer {
    pub layer: usize,
    /// First global sub-node id of this layer.
    pub node_offset: usize,
    /// Sub-node positions (the Gauss points of the layer's elements).
    pub nodes: Vec<Point3>,
    /// 8-node bricks over layer-local sub-node ids.
    pub cells: Vec<[usize; 8]>,
    /// Gauss lattice dimensions.
    pub dims: [usize; 3],
}

/// Per-layer Gauss-point sub-meshes. Distinct layers share no sub-nodes, so
/// history variables are never interpolated across material interfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussSubMesh {
    pub layers: Vec<SubMeshLayer>,
    /// Global sub-node id of Gauss point `g` of element `e`, at index `8 e + g`.
    pub subnode_of: Vec<usize>,
}

impl GaussSubMesh {
    pub fn n_subnodes(&self) -> usize {
        self.layers.iter().map(|l| l.nodes.len()).sum()
    }

    pub fn n_cells(&self) -> usize {
        self.layers.iter().map(|l| l.cells.len()).sum()
    }

    pub fn subnode(&self, element: usize, gauss: usize) -> usize {
        self.subnode_of[8 * element + gauss]
    }
}

/// Builds the Gauss-point sub-mesh, one structured lattice per layer.
pub fn build_gauss_submesh(mesh: &Mesh) -> Result<GaussSubMesh> {
    let layout = mesh.layout.as_ref().ok_or_else(|| {
        Error::UnsupportedTopology("Gauss sub-meshes require a structured layered grid".into())
    })?;
    let [nx, ny, _] = layout.counts();
    let mut subnode_of = vec![usize::MAX; 8 * mesh.n_elements()];
    let mut layers = Vec::with_capacity(layout.layer_k_range.len());
    let mut offset = 0;

    for (li, &(k0, k1)) in layout.layer_k_range.iter().enumerate() {
        let dims = [2 * nx, 2 * ny, 2 * (k1 - k0)];
        let lattice = |a: usize, b: usize, c: usize| a + dims[0] * (b + dims[1] * c);
        let mut nodes = vec![Point3::zeros(); dims[0] * dims[1] * dims[2]];
        for k in k0..k1 {
            for j in 0..ny {
                for i in 0..nx {
                    let e = layout.element_id(i, j, k);
                    if mesh.layer_of_element[e] != li {
                        return Err(Error::UnsupportedTopology(format!(
                            "element {e} breaks the block structure of layer {li}"
                        )));
                    }
                    let gp = element::gauss_coordinates(&mesh.element_coords(e));
                    for (g, p) in gp.iter().enumerate() {
                        let (gi, gj, gk) = (g & 1, (g >> 1) & 1, g >> 2);
                        let local = lattice(2 * i + gi, 2 * j + gj, 2 * (k - k0) + gk);
                        nodes[local] = *p;
                        subnode_of[8 * e + g] = offset + local;
                    }
                }
            }
        }
        let mut cells = Vec::new();
        for c in 0..dims[2] - 1 {
            for b in 0..dims[1] - 1 {
                for a in 0..dims[0] - 1 {
                    cells.push([
                        lattice(a, b, c),
                        lattice(a + 1, b, c),
                        lattice(a + 1, b + 1, c),
                        lattice(a, b + 1, c),
                        lattice(a, b, c + 1),
                        lattice(a + 1, b, c + 1),
                        lattice(a + 1, b + 1, c + 1),
                        lattice(a, b + 1, c + 1),
                    ]);
                }
            }
        }
        let n = nodes.len();
        layers.push(SubMeshLayer {
            layer: li,
            node_offset: offset,
            nodes,
            cells,
            dims,
        });
        offset += n;
    }
    if subnode_of.iter().any(|&s| s == usize::MAX) {
        return Err(Error::UnsupportedTopology("some Gauss points were not mapped".into()));
    }
    Ok(GaussSubMesh { layers, subnode_of })
}
