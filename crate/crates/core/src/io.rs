//! Profile files: `x,c` CSV plus a JSON sidecar with the class constants and
//! the horizon.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::header_path;
use crate::grids::SpaceGrid;
use crate::velocity::{ClassConstants, VelocityProfile};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileHeader {
    #[serde(flatten)]
    pub class: ClassConstants,
    #[serde(rename = "T")]
    pub horizon: f64,
}

pub fn write_profile(path: &Path, c: &VelocityProfile, horizon: f64) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    c.write_csv(file)?;
    let header = ProfileHeader {
        class: *c.class(),
        horizon,
    };
    let side = header_path(path);
    fs::write(&side, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&side, e))
}

/// Reads a profile written by [`write_profile`]; the nodes must be uniform
/// and start at 0.
pub fn read_profile(path: &Path) -> Result<(VelocityProfile, f64)> {
    let side = header_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let header: ProfileHeader = serde_json::from_str(&text)?;
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut xs = Vec::new();
    let mut cs = Vec::new();
    for row in csv::Reader::from_reader(file).deserialize() {
        let (x, c): (f64, f64) = row?;
        xs.push(x);
        cs.push(c);
    }
    if xs.len() < 2 || xs[0] != 0.0 {
        return Err(Error::InvalidInput(format!(
            "{}: nodes must start at 0",
            path.display()
        )));
    }
    let grid = SpaceGrid::new(*xs.last().unwrap(), xs.len() - 1)?;
    let dx = grid.dx();
    if let Some(i) = (0..xs.len()).find(|&i| (xs[i] - i as f64 * dx).abs() > 1e-9 * (1.0 + xs[i])) {
        return Err(Error::InvalidInput(format!(
            "{}: node {i} at {} breaks the uniform spacing",
            path.display(),
            xs[i]
        )));
    }
    Ok((VelocityProfile::new(grid, cs, header.class)?, header.horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity::ProfileShape;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let class = ClassConstants {
            c0: 0.5,
            c1: 1.4,
            support: 1.0,
            m: 25.0,
        };
        let c = VelocityProfile::from_shape(SpaceGrid::new(2.0, 100).unwrap(), &ProfileShape::standard_bump(), class)
            .unwrap();
        write_profile(&path, &c, 1.0).unwrap();
        let (back, t) = read_profile(&path).unwrap();
        assert_eq!(t, 1.0);
        assert_eq!(back.class(), c.class());
        assert_eq!(back.samples(), c.samples());
        let text = fs::read_to_string(path.with_extension("json")).unwrap();
        for key in ["\"C0\"", "\"C1\"", "\"L\"", "\"m\"", "\"T\""] {
            assert!(text.contains(key), "{key}");
        }
    }
}
