//! The `detect` and `sweep` subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use gflow::neck::{detect, NeckRegion};
use gflow::FlowState;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::{from_document, Override, RunConfig};
use crate::output::read_snapshot;
use crate::run::{execute, RunOutcome};

/// Certifies necks on a single snapshot. There is no history, so the
/// backward time window is collapsed to zero.
pub fn detect_snapshot(cfg: &RunConfig, snapshot: &Path) -> Result<Vec<NeckRegion>> {
    let dim = cfg.dimension()?;
    let mut params = cfg.neck;
    params.theta = 0.0;
    let state = FlowState::single(read_snapshot(snapshot)?);
    Ok(detect(&state, &params, dim)?)
}

/// One cell of a sweep: the overrides that define it and its outcome.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub index: usize,
    pub overrides: Vec<String>,
    pub outcome: Option<RunOutcome>,
    pub error: Option<String>,
}

/// Expands overrides into the cells of a cartesian product: every override
/// whose value is a JSON array is an axis, all others are fixed. A literal
/// array value is written as a one-element array of arrays.
pub fn sweep_cells(overrides: &[Override]) -> Result<Vec<Vec<Override>>> {
    let mut cells: Vec<Vec<Override>> = vec![Vec::new()];
    for o in overrides {
        let values = match &o.value {
            Value::Array(v) if v.is_empty() => bail!("sweep axis {} has no values", o.path.join(".")),
            Value::Array(v) => v.clone(),
            v => vec![v.clone()],
        };
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push(Override {
                        path: o.path.clone(),
                        value: v.clone(),
                    });
                    c
                })
            })
            .collect();
    }
    Ok(cells)
}

/// Runs every cell in parallel into `out/cell_NNN`.
pub fn sweep(base: &Value, overrides: &[Override], out: &Path) -> Result<Vec<SweepCell>> {
    let cells = sweep_cells(overrides)?;
    Ok(cells
        .into_par_iter()
        .enumerate()
        .map(|(index, ovr)| {
            let names = ovr.iter().map(ToString::to_string).collect();
            let dir: PathBuf = out.join(format!("cell_{index:03}"));
            let result = from_document(base.clone(), &ovr).and_then(|cfg| execute(&cfg, &dir, &mut ()));
            match result {
                Ok(o) => SweepCell {
                    index,
                    overrides: names,
                    outcome: Some(o),
                    error: None,
                },
                Err(e) => SweepCell {
                    index,
                    overrides: names,
                    outcome: None,
                    error: Some(format!("{e:#}")),
                },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arrays_become_axes() {
        let o: Vec<Override> = ["a=[1,2]", "b=[3,4,5]", "c=x"].iter().map(|s| s.parse().unwrap()).collect();
        let cells = sweep_cells(&o).unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0].iter().map(ToString::to_string).collect::<Vec<_>>(), ["a=1", "b=3", "c=\"x\""]);
        assert_eq!(cells[5][0].to_string(), "a=2");
        assert_eq!(cells[5][1].to_string(), "b=5");
    }

    #[test]
    fn nested_array_is_a_literal() {
        let o: Vec<Override> = vec!["w=[[0.3,0.32]]".parse().unwrap()];
        let cells = sweep_cells(&o).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0][0].value, serde_json::json!([0.3, 0.32]));
    }

    #[test]
    fn empty_axis_is_an_error() {
        let o: Vec<Override> = vec!["w=[]".parse().unwrap()];
        assert!(sweep_cells(&o).is_err());
    }
}
