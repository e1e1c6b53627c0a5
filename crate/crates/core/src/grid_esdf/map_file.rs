//! Text map format with run-length encoded occupancy.
//!
//! ```text
//! occupancy-grid v1
//! origin <x> <y> <z>
//! resolution <meters>
//! dims <nx> <ny> <nz>
//! runs <count>
//! <value>:<length> <value>:<length> ...
//! end
//! ```
//!
//! `value` is `0` (free) or `1` (occupied). Runs cover cells in linear order,
//! `x` fastest, then `y`, then `z`, and their lengths must sum to
//! `nx * ny * nz`. Run tokens may be split over any number of lines. Blank
//! lines and lines starting with `#` are ignored. See `docs/formats.md`.

use std::fmt::Write as _;
use std::path::Path;

use super::{GridGeometry, VoxelGrid};
use crate::error::{PlannerError, Result};
use crate::Vec3;

const MAGIC: &str = "occupancy-grid v1";
const RUNS_PER_LINE: usize = 16;

pub fn write_map(grid: &VoxelGrid) -> String {
    let g = grid.geometry();
    let mut runs: Vec<(bool, usize)> = Vec::new();
    for &occupied in grid.occupancy() {
        match runs.last_mut() {
            Some((value, len)) if *value == occupied => *len += 1,
            _ => runs.push((occupied, 1)),
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "origin {} {} {}", g.origin.x, g.origin.y, g.origin.z);
    let _ = writeln!(out, "resolution {}", g.resolution);
    let _ = writeln!(out, "dims {} {} {}", g.dims[0], g.dims[1], g.dims[2]);
    let _ = writeln!(out, "runs {}", runs.len());
    for chunk in runs.chunks(RUNS_PER_LINE) {
        let line: Vec<String> = chunk
            .iter()
            .map(|(v, n)| format!("{}:{}", u8::from(*v), n))
            .collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    let _ = writeln!(out, "end");
    out
}

fn err(line: usize, message: impl Into<String>) -> PlannerError {
    PlannerError::MapFormat {
        line,
        message: message.into(),
    }
}

fn parse_fields<T: std::str::FromStr>(line_no: usize, line: &str, key: &str, count: usize) -> Result<Vec<T>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(err(line_no, format!("expected `{key}`")));
    }
    let values: Vec<&str> = parts.collect();
    if values.len() != count {
        return Err(err(
            line_no,
            format!("`{key}` takes {count} values, found {}", values.len()),
        ));
    }
    values
        .iter()
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| err(line_no, format!("cannot parse `{v}` in `{key}`")))
        })
        .collect()
}

pub fn parse_map(text: &str) -> Result<VoxelGrid> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")))
    };

    let (n, magic) = next("header")?;
    if magic != MAGIC {
        return Err(err(n, format!("expected header `{MAGIC}`")));
    }
    let (n, l) = next("origin")?;
    let origin: Vec<f64> = parse_fields(n, l, "origin", 3)?;
    let (n, l) = next("resolution")?;
    let resolution: Vec<f64> = parse_fields(n, l, "resolution", 1)?;
    let (dims_line, l) = next("dims")?;
    let dims: Vec<usize> = parse_fields(dims_line, l, "dims", 3)?;
    let geometry = GridGeometry::new(
        Vec3::new(origin[0], origin[1], origin[2]),
        resolution[0],
        [dims[0], dims[1], dims[2]],
    )
    .map_err(|e| err(dims_line, e.to_string()))?;
    let (runs_line, l) = next("runs")?;
    let run_count: Vec<usize> = parse_fields(runs_line, l, "runs", 1)?;

    let total = geometry.cell_count();
    let mut occupancy = Vec::with_capacity(total);
    let mut seen_runs = 0;
    loop {
        let (n, l) = next("run data or `end`")?;
        if l == "end" {
            break;
        }
        for token in l.split_whitespace() {
            let (value, len) = token
                .split_once(':')
                .ok_or_else(|| err(n, format!("malformed run `{token}`")))?;
            let value = match value {
                "0" => false,
                "1" => true,
                _ => return Err(err(n, format!("run value must be 0 or 1 in `{token}`"))),
            };
            let len: usize = len
                .parse()
                .map_err(|_| err(n, format!("malformed run length in `{token}`")))?;
            if len == 0 {
                return Err(err(n, "zero-length run"));
            }
            if occupancy.len() + len > total {
                return Err(err(n, format!("runs exceed {total} cells")));
            }
            occupancy.extend(std::iter::repeat_n(value, len));
            seen_runs += 1;
        }
    }
    if seen_runs != run_count[0] {
        return Err(err(
            runs_line,
            format!("declared {} runs, found {seen_runs}", run_count[0]),
        ));
    }
    if occupancy.len() != total {
        return Err(err(
            runs_line,
            format!("runs cover {} cells, expected {total}", occupancy.len()),
        ));
    }
    VoxelGrid::from_occupancy(geometry, occupancy)
}

pub fn load_map(path: &Path) -> Result<VoxelGrid> {
    parse_map(&std::fs::read_to_string(path)?)
}

pub fn save_map(grid: &VoxelGrid, path: &Path) -> Result<()> {
    std::fs::write(path, write_map(grid))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_example_parses() {
        let text = "occupancy-grid v1\norigin 0 0 0\nresolution 0.5\ndims 4 2 1\nruns 3\n0:3 1:2\n0:3\nend\n";
        let grid = parse_map(text).unwrap();
        assert_eq!(grid.occupied_count(), 2);
        assert!(grid.is_occupied([3, 0, 0]));
        assert!(grid.is_occupied([0, 1, 0]));
        assert_eq!(
            write_map(&grid),
            "occupancy-grid v1\norigin 0 0 0\nresolution 0.5\ndims 4 2 1\nruns 3\n0:3 1:2 0:3\nend\n"
        );
    }

    #[test]
    fn errors_are_line_anchored() {
        let text = "occupancy-grid v1\norigin 0 0 0\nresolution 0.5\ndims 4 2 1\nruns 1\n0:9\nend\n";
        match parse_map(text) {
            Err(PlannerError::MapFormat { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
        match parse_map("occupancy-grid v1\norigin 0 0\n") {
            Err(PlannerError::MapFormat { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn write_parse_round_trip(
            dims in (1usize..7, 1usize..6, 1usize..4),
            bits in proptest::collection::vec(any::<bool>(), 168),
            ox in -10.0f64..10.0,
            res in 0.01f64..2.0,
        ) {
            let geometry = GridGeometry::new(Vec3::new(ox, -ox * 0.3, 0.1), res, [dims.0, dims.1, dims.2]).unwrap();
            let occ = bits[..geometry.cell_count()].to_vec();
            let grid = VoxelGrid::from_occupancy(geometry, occ).unwrap();
            let parsed = parse_map(&write_map(&grid)).unwrap();
            prop_assert_eq!(parsed, grid);
        }
    }
}
