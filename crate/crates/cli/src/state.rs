//! State-file parsing.
//!
//! Line-oriented, `#` comments:
//!
//! ```text
//! q    <link> <value>
//! qd   <link> <value>
//! qdd  <link> <value>
//! tau  <link> <value>
//! fx   <link> <v1> <v2> <v3> <v4> <v5> <v6>
//! y    <kind>:<link> <values...>
//! ```
//!
//! Links are referenced by name; unspecified entries default to zero. `y`
//! lines feed load-cell channels (`loadcell3:<link>`, `slippery:<link>`).

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DVector;

use dynlu::assembly::MeasureKind;
use dynlu::estimate::{channel_key, InputValues};
use dynlu::model::KinematicTree;
use dynlu::spatial::{SpatialVec, Vec3};

/// Fully parsed state: joint positions/velocities plus measured inputs.
#[derive(Debug, Clone)]
pub struct StateFile {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
    pub inputs: InputValues,
}

pub fn parse_state(text: &str, tree: &KinematicTree) -> Result<StateFile> {
    let n = tree.n_links();
    let mut state = StateFile {
        q: vec![0.0; n],
        qd: vec![0.0; n],
        inputs: InputValues {
            qdd: vec![0.0; n],
            tau: vec![0.0; n],
            fx: vec![SpatialVec::zero(); n],
            channels: Default::default(),
        },
    };

    for (lineno0, raw) in text.lines().enumerate() {
        let line = lineno0 + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let parse_vals = |toks: &[&str]| -> Result<Vec<f64>> {
            toks.iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| anyhow!("line {line}: invalid number `{t}`"))
                })
                .collect()
        };
        match tokens[0] {
            kind @ ("q" | "qd" | "qdd" | "tau") => {
                if tokens.len() != 3 {
                    bail!("line {line}: expected `{kind} <link> <value>`");
                }
                let idx = tree
                    .link_index(tokens[1])
                    .with_context(|| format!("line {line}"))?;
                let v = parse_vals(&tokens[2..3])?[0];
                match kind {
                    "q" => state.q[idx - 1] = v,
                    "qd" => state.qd[idx - 1] = v,
                    "qdd" => state.inputs.qdd[idx - 1] = v,
                    _ => state.inputs.tau[idx - 1] = v,
                }
            }
            "fx" => {
                if tokens.len() != 8 {
                    bail!("line {line}: expected `fx <link> <6 values>`");
                }
                let idx = tree
                    .link_index(tokens[1])
                    .with_context(|| format!("line {line}"))?;
                let v = parse_vals(&tokens[2..])?;
                state.inputs.fx[idx - 1] = SpatialVec::new(
                    Vec3::new(v[0], v[1], v[2]),
                    Vec3::new(v[3], v[4], v[5]),
                );
            }
            "y" => {
                if tokens.len() < 3 {
                    bail!("line {line}: expected `y <kind>:<link> <values...>`");
                }
                let (kind_str, link_name) = tokens[1]
                    .split_once(':')
                    .ok_or_else(|| anyhow!("line {line}: channel must be <kind>:<link>"))?;
                let kind = match kind_str {
                    "loadcell3" => MeasureKind::LoadCell3,
                    "slippery" => MeasureKind::Slippery,
                    other => bail!("line {line}: unknown channel kind `{other}`"),
                };
                let idx = tree
                    .link_index(link_name)
                    .with_context(|| format!("line {line}"))?;
                let vals = parse_vals(&tokens[2..])?;
                if vals.len() != kind.rows() {
                    bail!(
                        "line {line}: channel `{}` expects {} values, got {}",
                        tokens[1],
                        kind.rows(),
                        vals.len()
                    );
                }
                state
                    .inputs
                    .channels
                    .insert(channel_key(kind, idx), DVector::from_vec(vals));
            }
            other => bail!("line {line}: unknown directive `{other}`"),
        }
    }
    Ok(state)
}
