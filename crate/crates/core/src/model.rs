//! Kinematic-tree robot description, model-file parsing, and the kinematics
//! pass producing per-link transforms, velocities, and bias terms.
//!
//! # Model file format
//!
//! UTF-8, line oriented, `#` starts a comment. One link per line:
//!
//! ```text
//! link <name> parent=<name|world> joint=<revolute|prismatic> axis=<x,y,z> \
//!      xyz=<x,y,z> rpy=<r,p,y> mass=<kg> com=<x,y,z> inertia=<ixx,iyy,izz,ixy,ixz,iyz>
//! gravity <x,y,z>
//! ```
//!
//! `xyz`/`rpy` give the link frame's zero-configuration pose in the parent
//! frame (roll-pitch-yaw, extrinsic x-y-z), `com` is the center of mass in
//! link coordinates, and `inertia` is taken about the center of mass. All
//! fields except `parent` have defaults: `joint=revolute`, `axis=0,0,1`,
//! zero pose, `mass=1`, zero `com` and `inertia`. Links may be listed in
//! any order; they are renumbered topologically so that every link has a
//! smaller index than its children.

use std::collections::BTreeMap;

use nalgebra::Rotation3;
use thiserror::Error;

use crate::spatial::{Mat3, SpatialInertia, SpatialTransform, SpatialVec, Vec3};
use crate::spatial::{cross_force_vec, cross_motion_vec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// Single degree-of-freedom joint connecting a link to its parent.
#[derive(Debug, Clone)]
pub struct Joint {
    pub kind: JointKind,
    /// Unit axis in the link's own coordinates.
    pub axis: Vec3,
    /// Fixed zero-configuration transform from the parent frame into the
    /// link frame.
    pub fixed: SpatialTransform,
}

impl Joint {
    /// Motion subspace column: `(axis, 0)` for revolute, `(0, axis)` for
    /// prismatic.
    pub fn motion_subspace(&self) -> SpatialVec {
        match self.kind {
            JointKind::Revolute => SpatialVec::new(self.axis, Vec3::zeros()),
            JointKind::Prismatic => SpatialVec::new(Vec3::zeros(), self.axis),
        }
    }

    /// `^i X_{lambda_i}(q)`: joint motion composed with the fixed offset.
    pub fn transform(&self, q: f64) -> SpatialTransform {
        let motion = match self.kind {
            JointKind::Revolute => SpatialTransform::rotation_about(&self.axis, q),
            JointKind::Prismatic => SpatialTransform::translation_of(&(self.axis * q)),
        };
        motion.compose(&self.fixed)
    }
}

/// One link of the tree, stored in topological order.
#[derive(Debug, Clone)]
pub struct Link {
    pub name: String,
    /// Parent link index; 0 is the fixed base.
    pub parent: usize,
    pub joint: Joint,
    pub inertia: SpatialInertia,
}

/// A validated kinematic tree with topologically numbered links (1..=n,
/// parent index always smaller than the link index).
#[derive(Debug, Clone)]
pub struct KinematicTree {
    links: Vec<Link>,
    children: Vec<Vec<usize>>,
    pub gravity: Vec3,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("topology error: {0}")]
    Topology(String),
    #[error("dimension mismatch: expected {expected} joint values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unknown link name `{0}`")]
    UnknownLink(String),
}

impl KinematicTree {
    /// Build from links whose `parent` fields already satisfy the
    /// topological numbering (parent index < link index, parent 0 = base).
    pub fn new(links: Vec<Link>, gravity: Vec3) -> Result<Self, ModelError> {
        let n = links.len();
        if n == 0 {
            return Err(ModelError::Topology("model has no links".into()));
        }
        let mut children = vec![Vec::new(); n + 1];
        let mut roots = 0;
        for (idx, link) in links.iter().enumerate() {
            let i = idx + 1;
            if link.parent >= i {
                return Err(ModelError::Topology(format!(
                    "link {} (`{}`) has parent {} >= its own index",
                    i, link.name, link.parent
                )));
            }
            if link.parent == 0 {
                roots += 1;
            }
            children[link.parent].push(i);
        }
        if roots != 1 {
            return Err(ModelError::Topology(format!(
                "expected exactly one link attached to the base, found {roots}"
            )));
        }
        Ok(KinematicTree { links, children, gravity })
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    /// Link by 1-based index.
    pub fn link(&self, i: usize) -> &Link {
        &self.links[i - 1]
    }

    pub fn parent(&self, i: usize) -> usize {
        self.links[i - 1].parent
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn links(&self) -> impl Iterator<Item = (usize, &Link)> {
        self.links.iter().enumerate().map(|(idx, l)| (idx + 1, l))
    }

    pub fn motion_subspace(&self, i: usize) -> SpatialVec {
        self.link(i).joint.motion_subspace()
    }

    pub fn inertia(&self, i: usize) -> &SpatialInertia {
        &self.link(i).inertia
    }

    pub fn link_index(&self, name: &str) -> Result<usize, ModelError> {
        self.links
            .iter()
            .position(|l| l.name == name)
            .map(|idx| idx + 1)
            .ok_or_else(|| ModelError::UnknownLink(name.to_string()))
    }

    pub fn link_name(&self, i: usize) -> &str {
        &self.links[i - 1].name
    }

    /// Base acceleration `a_0 = -a_g`, where `a_g = (0, gravity)`.
    pub fn base_acceleration(&self) -> SpatialVec {
        SpatialVec::new(Vec3::zeros(), -self.gravity)
    }

    pub fn check_dims(&self, len: usize) -> Result<(), ModelError> {
        if len != self.n_links() {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_links(),
                found: len,
            });
        }
        Ok(())
    }
}

/// Per-state kinematic quantities: joint transforms, link velocities, and
/// the velocity-product bias terms consumed by both the recursions and the
/// constraint assembly.
#[derive(Debug, Clone)]
pub struct KinematicState {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    /// `^i X_{lambda_i}(q_i)` per link.
    pub x_lambda: Vec<SpatialTransform>,
    /// Link spatial velocities.
    pub v: Vec<SpatialVec>,
    /// `c_i = v_i x S_i qd_i`.
    pub c: Vec<SpatialVec>,
    /// `nu_i = v_i x* I_i v_i`.
    pub nu: Vec<SpatialVec>,
}

impl KinematicState {
    fn idx(i: usize) -> usize {
        i - 1
    }

    pub fn x(&self, i: usize) -> &SpatialTransform {
        &self.x_lambda[Self::idx(i)]
    }

    pub fn vel(&self, i: usize) -> &SpatialVec {
        &self.v[Self::idx(i)]
    }

    pub fn bias_c(&self, i: usize) -> &SpatialVec {
        &self.c[Self::idx(i)]
    }

    pub fn bias_nu(&self, i: usize) -> &SpatialVec {
        &self.nu[Self::idx(i)]
    }
}

/// Run the velocity recursion `v_i = ^i X_{lambda_i} v_{lambda_i} + S_i qd_i`
/// with `v_0 = 0`, populating transforms and bias terms.
pub fn kinematics(
    tree: &KinematicTree,
    q: &[f64],
    qd: &[f64],
) -> Result<KinematicState, ModelError> {
    tree.check_dims(q.len())?;
    tree.check_dims(qd.len())?;
    let n = tree.n_links();
    let mut x_lambda = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut nu = Vec::with_capacity(n);
    for i in 1..=n {
        let link = tree.link(i);
        let x = link.joint.transform(q[i - 1]);
        let s = link.joint.motion_subspace();
        let v_parent = if link.parent == 0 {
            SpatialVec::zero()
        } else {
            x.apply_motion(&v[link.parent - 1])
        };
        let s_qd = s.scale(qd[i - 1]);
        let v_i = v_parent + s_qd;
        c.push(cross_motion_vec(&v_i, &s_qd));
        nu.push(cross_force_vec(&v_i, &link.inertia.mul_vec(&v_i)));
        v.push(v_i);
        x_lambda.push(x);
    }
    Ok(KinematicState { q: q.to_vec(), qd: qd.to_vec(), x_lambda, v, c, nu })
}

/// Roll-pitch-yaw (extrinsic x-y-z) rotation taking child coordinates into
/// parent coordinates.
fn rpy_matrix(r: f64, p: f64, y: f64) -> Mat3 {
    (Rotation3::from_axis_angle(&Vec3::z_axis(), y)
        * Rotation3::from_axis_angle(&Vec3::y_axis(), p)
        * Rotation3::from_axis_angle(&Vec3::x_axis(), r))
    .matrix()
    .clone_owned()
}

struct RawLink {
    name: String,
    parent: String,
    joint_kind: JointKind,
    axis: Vec3,
    xyz: Vec3,
    rpy: Vec3,
    mass: f64,
    com: Vec3,
    inertia: [f64; 6],
    line: usize,
}

fn parse_err(line: usize, col: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Parse { line, col, msg: msg.into() }
}

fn parse_floats(
    value: &str,
    expect: usize,
    line: usize,
    col: usize,
) -> Result<Vec<f64>, ModelError> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != expect {
        return Err(parse_err(
            line,
            col,
            format!("expected {expect} comma-separated numbers, got {}", parts.len()),
        ));
    }
    parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| parse_err(line, col, format!("invalid number `{p}`")))
        })
        .collect()
}

/// Parse a model file into a validated, topologically renumbered tree.
pub fn parse_model(text: &str) -> Result<KinematicTree, ModelError> {
    let mut raws: Vec<RawLink> = Vec::new();
    let mut gravity = Vec3::new(0.0, 0.0, -9.81);

    for (lineno0, raw_line) in text.lines().enumerate() {
        let line = lineno0 + 1;
        let content = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let head = tokens.next().unwrap();
        let col_of = |tok: &str| raw_line.find(tok).map(|p| p + 1).unwrap_or(1);
        match head {
            "gravity" => {
                let rest: Vec<&str> = tokens.collect();
                if rest.len() != 1 && rest.len() != 3 {
                    return Err(parse_err(line, 1, "gravity expects `gravity <x,y,z>`"));
                }
                let joined = rest.join("");
                let vals = parse_floats(&joined, 3, line, col_of(&joined))?;
                gravity = Vec3::new(vals[0], vals[1], vals[2]);
            }
            "link" => {
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_err(line, 1, "missing link name"))?
                    .to_string();
                let mut parent: Option<String> = None;
                let mut joint_kind = JointKind::Revolute;
                let mut axis = Vec3::z();
                let mut xyz = Vec3::zeros();
                let mut rpy = Vec3::zeros();
                let mut mass = 1.0;
                let mut com = Vec3::zeros();
                let mut inertia = [0.0; 6];
                for tok in tokens {
                    let col = col_of(tok);
                    let (key, value) = tok
                        .split_once('=')
                        .ok_or_else(|| parse_err(line, col, format!("expected key=value, got `{tok}`")))?;
                    match key {
                        "parent" => parent = Some(value.to_string()),
                        "joint" => {
                            joint_kind = match value {
                                "revolute" => JointKind::Revolute,
                                "prismatic" => JointKind::Prismatic,
                                other => {
                                    return Err(parse_err(
                                        line,
                                        col,
                                        format!("unknown joint type `{other}`"),
                                    ))
                                }
                            }
                        }
                        "axis" => {
                            let v = parse_floats(value, 3, line, col)?;
                            let a = Vec3::new(v[0], v[1], v[2]);
                            if a.norm() < 1e-12 {
                                return Err(parse_err(line, col, "joint axis must be nonzero"));
                            }
                            axis = a / a.norm();
                        }
                        "xyz" => {
                            let v = parse_floats(value, 3, line, col)?;
                            xyz = Vec3::new(v[0], v[1], v[2]);
                        }
                        "rpy" => {
                            let v = parse_floats(value, 3, line, col)?;
                            rpy = Vec3::new(v[0], v[1], v[2]);
                        }
                        "mass" => {
                            let v = parse_floats(value, 1, line, col)?;
                            if !v[0].is_finite() || v[0] < 0.0 {
                                return Err(parse_err(line, col, "mass must be a finite non-negative number"));
                            }
                            mass = v[0];
                        }
                        "com" => {
                            let v = parse_floats(value, 3, line, col)?;
                            com = Vec3::new(v[0], v[1], v[2]);
                        }
                        "inertia" => {
                            let v = parse_floats(value, 6, line, col)?;
                            inertia.copy_from_slice(&v);
                        }
                        other => {
                            return Err(parse_err(line, col, format!("unknown field `{other}`")))
                        }
                    }
                }
                let parent = parent
                    .ok_or_else(|| parse_err(line, 1, format!("link `{name}` missing parent=")))?;
                raws.push(RawLink {
                    name,
                    parent,
                    joint_kind,
                    axis,
                    xyz,
                    rpy,
                    mass,
                    com,
                    inertia,
                    line,
                });
            }
            other => {
                return Err(parse_err(line, 1, format!("unknown directive `{other}`")));
            }
        }
    }

    if raws.is_empty() {
        return Err(ModelError::Topology("model has no links".into()));
    }

    // Resolve names, then renumber topologically (children in file order).
    let mut by_name: BTreeMap<&str, usize> = BTreeMap::new();
    for (idx, raw) in raws.iter().enumerate() {
        if by_name.insert(raw.name.as_str(), idx).is_some() {
            return Err(ModelError::Topology(format!(
                "duplicate link name `{}` (line {})",
                raw.name, raw.line
            )));
        }
    }
    let mut raw_children: Vec<Vec<usize>> = vec![Vec::new(); raws.len()];
    let mut roots: Vec<usize> = Vec::new();
    for (idx, raw) in raws.iter().enumerate() {
        if raw.parent == "world" {
            roots.push(idx);
        } else {
            match by_name.get(raw.parent.as_str()) {
                Some(&p) if p == idx => {
                    return Err(ModelError::Topology(format!(
                        "link `{}` is its own parent",
                        raw.name
                    )))
                }
                Some(&p) => raw_children[p].push(idx),
                None => {
                    return Err(ModelError::Topology(format!(
                        "link `{}` has unknown parent `{}` (orphan)",
                        raw.name, raw.parent
                    )))
                }
            }
        }
    }
    if roots.len() != 1 {
        return Err(ModelError::Topology(format!(
            "expected exactly one link with parent=world, found {}",
            roots.len()
        )));
    }

    // Depth-first preorder numbering from the root, children in file
    // order; anything unreachable is on a cycle.
    let mut order: Vec<usize> = Vec::with_capacity(raws.len());
    let mut stack = vec![roots[0]];
    while let Some(idx) = stack.pop() {
        order.push(idx);
        for &ch in raw_children[idx].iter().rev() {
            stack.push(ch);
        }
    }
    if order.len() != raws.len() {
        let stuck: Vec<&str> = raws
            .iter()
            .enumerate()
            .filter(|(i, _)| !order.contains(i))
            .map(|(_, r)| r.name.as_str())
            .collect();
        return Err(ModelError::Topology(format!(
            "cycle detected involving links: {}",
            stuck.join(", ")
        )));
    }

    let mut new_index = vec![0usize; raws.len()];
    for (new_pos, &old_idx) in order.iter().enumerate() {
        new_index[old_idx] = new_pos + 1;
    }

    let links = order
        .iter()
        .map(|&old_idx| {
            let raw = &raws[old_idx];
            let parent = if raw.parent == "world" {
                0
            } else {
                new_index[by_name[raw.parent.as_str()]]
            };
            let e_fixed = rpy_matrix(raw.rpy.x, raw.rpy.y, raw.rpy.z).transpose();
            let ic = Mat3::new(
                raw.inertia[0],
                raw.inertia[3],
                raw.inertia[4],
                raw.inertia[3],
                raw.inertia[1],
                raw.inertia[5],
                raw.inertia[4],
                raw.inertia[5],
                raw.inertia[2],
            );
            Link {
                name: raw.name.clone(),
                parent,
                joint: Joint {
                    kind: raw.joint_kind,
                    axis: raw.axis,
                    fixed: SpatialTransform::new(e_fixed, raw.xyz),
                },
                inertia: SpatialInertia::from_mass_com_inertia(raw.mass, &raw.com, &ic),
            }
        })
        .collect();

    KinematicTree::new(links, gravity)
}

/// Fixture and benchmark tree generators.
pub mod builders {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rod_link(name: String, parent: usize, kind: JointKind, axis: Vec3, offset: Vec3) -> Link {
        // Unit-mass, unit-length rod along +x: slender-cylinder inertia.
        let ic = Mat3::from_diagonal(&Vec3::new(0.00125, 1.0 / 12.0, 1.0 / 12.0));
        Link {
            name,
            parent,
            joint: Joint {
                kind,
                axis,
                fixed: SpatialTransform::new(Mat3::identity(), offset),
            },
            inertia: SpatialInertia::from_mass_com_inertia(1.0, &Vec3::new(0.5, 0.0, 0.0), &ic),
        }
    }

    /// Serial chain of `n` identical unit-mass, unit-length revolute-z links.
    pub fn serial_chain(n: usize) -> KinematicTree {
        let links = (1..=n)
            .map(|i| {
                let offset = if i == 1 { Vec3::zeros() } else { Vec3::new(1.0, 0.0, 0.0) };
                rod_link(format!("link{i}"), i - 1, JointKind::Revolute, Vec3::z(), offset)
            })
            .collect();
        KinematicTree::new(links, Vec3::new(0.0, 0.0, -9.81)).unwrap()
    }

    /// Serial chain whose extremal links (1 and n) ride prismatic-z joints,
    /// used by the load-cell estimation scenarios: the feet are mounted on
    /// force-sensed vertical guides, interior joints stay revolute-z.
    pub fn serial_chain_with_feet(n: usize) -> KinematicTree {
        assert!(n >= 2, "feet chain needs at least two links");
        let links = (1..=n)
            .map(|i| {
                let offset = if i == 1 { Vec3::zeros() } else { Vec3::new(1.0, 0.0, 0.0) };
                let kind = if i == 1 || i == n { JointKind::Prismatic } else { JointKind::Revolute };
                rod_link(format!("link{i}"), i - 1, kind, Vec3::z(), offset)
            })
            .collect();
        KinematicTree::new(links, Vec3::new(0.0, 0.0, -9.81)).unwrap()
    }

    /// Random tree with `n` links: random branching, joint types, axes, and
    /// physically valid (positive-definite) inertias. Deterministic in `seed`.
    pub fn random_tree(seed: u64, n: usize) -> KinematicTree {
        let mut rng = StdRng::seed_from_u64(seed);
        let links = (1..=n)
            .map(|i| {
                let parent = if i == 1 { 0 } else { rng.random_range(1..i) };
                let kind = if rng.random_bool(0.8) {
                    JointKind::Revolute
                } else {
                    JointKind::Prismatic
                };
                let axis = if rng.random_bool(0.5) {
                    match rng.random_range(0..3) {
                        0 => Vec3::x(),
                        1 => Vec3::y(),
                        _ => Vec3::z(),
                    }
                } else {
                    let a = Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    if a.norm() < 1e-3 { Vec3::z() } else { a / a.norm() }
                };
                let xyz = Vec3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                );
                let rpy = Vec3::new(
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                    rng.random_range(-1.5..1.5),
                );
                let mass = rng.random_range(0.5..2.0);
                let com = Vec3::new(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                );
                let a_mat = Mat3::from_fn(|_, _| rng.random_range(-0.3..0.3));
                let ic = a_mat.transpose() * a_mat + Mat3::identity() * 0.05;
                let e_fixed = rpy_matrix(rpy.x, rpy.y, rpy.z).transpose();
                Link {
                    name: format!("link{i}"),
                    parent,
                    joint: Joint { kind, axis, fixed: SpatialTransform::new(e_fixed, xyz) },
                    inertia: SpatialInertia::from_mass_com_inertia(mass, &com, &ic),
                }
            })
            .collect();
        KinematicTree::new(links, Vec3::new(0.0, 0.0, -9.81)).unwrap()
    }

    /// Random joint state in `(-pi, pi)`, deterministic in `seed`.
    pub fn random_state(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = StdRng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15));
        let q = (0..n).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
        let qd = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        (q, qd)
    }
}
