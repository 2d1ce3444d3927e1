//! Structured crossed-triangle meshes of rectangles with a labeled
//! Dirichlet/Neumann boundary partition, plus the dof bookkeeping for the
//! P1 (nodal) and P0 (cell) spaces built on them.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh must have at least one cell in each direction (got {nx} x {ny})")]
    EmptyMesh { nx: usize, ny: usize },
    #[error("domain side lengths must be positive (got {lx} x {ly})")]
    NonPositiveExtent { lx: f64, ly: f64 },
    #[error("cell {cell} is degenerate (area {area:.3e})")]
    DegenerateCell { cell: usize, area: f64 },
    #[error("Dirichlet boundary part is empty; at least one side must be constrained")]
    EmptyDirichletBoundary,
}

/// Sides of the rectangular domain, used to select the Dirichlet part.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub fn parse(s: &str) -> Option<Side> {
        match s {
            "bottom" => Some(Side::Bottom),
            "right" => Some(Side::Right),
            "top" => Some(Side::Top),
            "left" => Some(Side::Left),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeLabel {
    Dirichlet,
    Neumann,
}

/// One boundary edge (a side of a boundary triangle) with its label and
/// outward unit normal.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub label: EdgeLabel,
    pub side: Side,
    pub normal: [f64; 2],
    pub length: f64,
}

/// Triangulation of `[0, lx] x [0, ly]` by crossed triangles: every grid
/// square is split into four triangles around its center node.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Cell areas (all positive; orientation is checked at build time).
    pub areas: Vec<f64>,
    /// Gradients of the three P1 basis functions of each cell.
    pub grads: Vec<[[f64; 2]; 3]>,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Mesh {
    /// Builds the crossed-triangle mesh with the given Dirichlet sides.
    pub fn rectangle(
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        dirichlet_sides: &[Side],
    ) -> Result<Mesh, MeshError> {
        if nx == 0 || ny == 0 {
            return Err(MeshError::EmptyMesh { nx, ny });
        }
        if !(lx > 0.0) || !(ly > 0.0) {
            return Err(MeshError::NonPositiveExtent { lx, ly });
        }
        if dirichlet_sides.is_empty() {
            return Err(MeshError::EmptyDirichletBoundary);
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        // Row-interleaved numbering keeps the bandwidth at O(nx): row j holds
        // the nx+1 grid nodes at y = j*hy followed by the nx cell centers at
        // y = (j + 1/2)*hy.
        let stride = 2 * nx + 1;
        let grid = |i: usize, j: usize| j * stride + i;
        let center = |i: usize, j: usize| j * stride + (nx + 1) + i;
        let n_nodes = (ny + 1) * (nx + 1) + nx * ny;
        let mut nodes = vec![[0.0, 0.0]; n_nodes];
        for j in 0..=ny {
            for i in 0..=nx {
                nodes[grid(i, j)] = [i as f64 * hx, j as f64 * hy];
            }
            if j < ny {
                for i in 0..nx {
                    nodes[center(i, j)] = [(i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy];
                }
            }
        }
        let mut cells = Vec::with_capacity(4 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (g00, g10) = (grid(i, j), grid(i + 1, j));
                let (g01, g11) = (grid(i, j + 1), grid(i + 1, j + 1));
                let c = center(i, j);
                cells.push([g00, g10, c]);
                cells.push([g10, g11, c]);
                cells.push([g11, g01, c]);
                cells.push([g01, g00, c]);
            }
        }
        let mut boundary_edges = Vec::new();
        let label_of = |side: Side| {
            if dirichlet_sides.contains(&side) {
                EdgeLabel::Dirichlet
            } else {
                EdgeLabel::Neumann
            }
        };
        for i in 0..nx {
            boundary_edges.push(BoundaryEdge {
                nodes: [grid(i, 0), grid(i + 1, 0)],
                label: label_of(Side::Bottom),
                side: Side::Bottom,
                normal: [0.0, -1.0],
                length: hx,
            });
            boundary_edges.push(BoundaryEdge {
                nodes: [grid(i, ny), grid(i + 1, ny)],
                label: label_of(Side::Top),
                side: Side::Top,
                normal: [0.0, 1.0],
                length: hx,
            });
        }
        for j in 0..ny {
            boundary_edges.push(BoundaryEdge {
                nodes: [grid(0, j), grid(0, j + 1)],
                label: label_of(Side::Left),
                side: Side::Left,
                normal: [-1.0, 0.0],
                length: hy,
            });
            boundary_edges.push(BoundaryEdge {
                nodes: [grid(nx, j), grid(nx, j + 1)],
                label: label_of(Side::Right),
                side: Side::Right,
                normal: [1.0, 0.0],
                length: hy,
            });
        }
        let mut areas = Vec::with_capacity(cells.len());
        let mut grads = Vec::with_capacity(cells.len());
        for (ci, cell) in cells.iter().enumerate() {
            let p = [nodes[cell[0]], nodes[cell[1]], nodes[cell[2]]];
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let area = 0.5 * det;
            if !(area > 1e-300) {
                return Err(MeshError::DegenerateCell { cell: ci, area });
            }
            areas.push(area);
            let inv = 1.0 / det;
            grads.push([
                [(p[1][1] - p[2][1]) * inv, (p[2][0] - p[1][0]) * inv],
                [(p[2][1] - p[0][1]) * inv, (p[0][0] - p[2][0]) * inv],
                [(p[0][1] - p[1][1]) * inv, (p[1][0] - p[0][0]) * inv],
            ]);
        }
        Ok(Mesh { nodes, cells, boundary_edges, areas, grads, nx, ny, lx, ly })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn domain_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn cell_barycenter(&self, c: usize) -> [f64; 2] {
        let [i, j, k] = self.cells[c];
        let (p, q, r) = (self.nodes[i], self.nodes[j], self.nodes[k]);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    /// Value of a P1 nodal field at the barycenter of a cell.
    pub fn barycenter_value(&self, c: usize, nodal: &[f64]) -> f64 {
        let [i, j, k] = self.cells[c];
        (nodal[i] + nodal[j] + nodal[k]) / 3.0
    }

    /// Plain-text snapshot: one node or cell record per line.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("nodes {}\n", self.n_nodes()));
        for p in &self.nodes {
            out.push_str(&format!("{:.17e} {:.17e}\n", p[0], p[1]));
        }
        out.push_str(&format!("cells {}\n", self.n_cells()));
        for c in &self.cells {
            out.push_str(&format!("{} {} {}\n", c[0], c[1], c[2]));
        }
        out.push_str(&format!("boundary_edges {}\n", self.boundary_edges.len()));
        for e in &self.boundary_edges {
            let label = match e.label {
                EdgeLabel::Dirichlet => "dirichlet",
                EdgeLabel::Neumann => "neumann",
            };
            out.push_str(&format!("{} {} {}\n", e.nodes[0], e.nodes[1], label));
        }
        out
    }
}

/// Dof bookkeeping for the P1 vector space with strong Dirichlet conditions.
///
/// Vector dof numbering is `2 * node + component`; Dirichlet nodes carry
/// both their components in the constrained set.
#[derive(Debug, Clone)]
pub struct FieldLayout {
    pub n_nodes: usize,
    pub n_cells: usize,
    /// Nodes on the Dirichlet boundary, sorted.
    pub dirichlet_nodes: Vec<usize>,
    /// Free (non-Dirichlet) vector dofs, sorted.
    pub free_vdofs: Vec<usize>,
    /// Inverse map: vector dof -> index into `free_vdofs`.
    pub vdof_to_free: Vec<Option<usize>>,
    /// Scalar half-bandwidth: max node-index distance within a cell.
    pub hbw_scalar: usize,
    /// Half-bandwidth of the reduced free-dof vector system.
    pub hbw_free: usize,
}

impl FieldLayout {
    pub fn new(mesh: &Mesh) -> FieldLayout {
        let n_nodes = mesh.n_nodes();
        let mut is_dirichlet = vec![false; n_nodes];
        for e in &mesh.boundary_edges {
            if e.label == EdgeLabel::Dirichlet {
                is_dirichlet[e.nodes[0]] = true;
                is_dirichlet[e.nodes[1]] = true;
            }
        }
        let dirichlet_nodes: Vec<usize> =
            (0..n_nodes).filter(|&n| is_dirichlet[n]).collect();
        let mut free_vdofs = Vec::new();
        let mut vdof_to_free = vec![None; 2 * n_nodes];
        for node in 0..n_nodes {
            if !is_dirichlet[node] {
                for comp in 0..2 {
                    vdof_to_free[2 * node + comp] = Some(free_vdofs.len());
                    free_vdofs.push(2 * node + comp);
                }
            }
        }
        let mut hbw_scalar = 0;
        for cell in &mesh.cells {
            for a in 0..3 {
                for b in 0..3 {
                    hbw_scalar = hbw_scalar.max(cell[a].abs_diff(cell[b]));
                }
            }
        }
        let mut hbw_free = 0;
        for cell in &mesh.cells {
            for a in 0..3 {
                for b in 0..3 {
                    for ca in 0..2 {
                        for cb in 0..2 {
                            if let (Some(fa), Some(fb)) = (
                                vdof_to_free[2 * cell[a] + ca],
                                vdof_to_free[2 * cell[b] + cb],
                            ) {
                                hbw_free = hbw_free.max(fa.abs_diff(fb));
                            }
                        }
                    }
                }
            }
        }
        FieldLayout {
            n_nodes,
            n_cells: mesh.n_cells(),
            dirichlet_nodes,
            free_vdofs,
            vdof_to_free,
            hbw_scalar,
            hbw_free,
        }
    }

    pub fn n_free(&self) -> usize {
        self.free_vdofs.len()
    }

    pub fn is_dirichlet_node(&self, node: usize) -> bool {
        self.vdof_to_free[2 * node].is_none()
    }
}
