//! Flat-file output: binary solution dumps with a JSON header and CSV tables
//! whose first line is a `# {json}` provenance record.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Domain, Grid, NodalField};
use crate::solver::ObstacleSolution;

/// Provenance attached to every output file. Contains no timestamps so that
/// identical runs produce identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    /// Hex digest of the canonical configuration.
    pub config_hash: String,
    pub scenario: String,
    pub domain: String,
    pub counts: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub tol: f64,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, scenario: impl Into<String>, grid: &Grid, tol: f64, seed: u64) -> Self {
        let d = grid.domain();
        Self {
            tool: "obslab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash.into(),
            scenario: scenario.into(),
            domain: d.tag.clone(),
            counts: grid.counts().to_vec(),
            lower: (0..grid.dim()).map(|k| d.lower(k)).collect(),
            upper: (0..grid.dim()).map(|k| d.upper(k)).collect(),
            tol,
            seed,
        }
    }
}

/// Header stored next to `solution.bin`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionHeader {
    pub provenance: Provenance,
    /// Little-endian `f64`, x-fastest node order.
    pub encoding: String,
    pub len: usize,
    pub iterations: usize,
    pub warm_iterations: usize,
    pub energy: f64,
    pub projected_residual: f64,
    pub u_pos_threshold: f64,
    pub converged: bool,
}

/// Writes `solution.bin` and `solution.json` into `dir`.
pub fn write_solution(dir: &Path, sol: &ObstacleSolution, provenance: &Provenance) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("solution.bin"))?);
    for v in sol.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let header = SolutionHeader {
        provenance: provenance.clone(),
        encoding: "f64-le".into(),
        len: sol.values().len(),
        iterations: sol.iterations,
        warm_iterations: sol.warm_iterations,
        energy: sol.energy,
        projected_residual: sol.projected_residual,
        u_pos_threshold: sol.u_pos_threshold,
        converged: sol.converged,
    };
    write_json(&dir.join("solution.json"), &header)
}

/// Reads a solution written by [`write_solution`] back as a nodal field.
pub fn read_solution(dir: &Path) -> Result<(SolutionHeader, NodalField)> {
    let header: SolutionHeader = serde_json::from_slice(&fs::read(dir.join("solution.json"))?)?;
    let bytes = fs::read(dir.join("solution.bin"))?;
    if bytes.len() != 8 * header.len {
        return Err(Error::InvalidGrid(format!(
            "solution.bin holds {} bytes, header expects {} values",
            bytes.len(),
            header.len
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8 bytes")))
        .collect();
    let p = &header.provenance;
    let domain = Domain::new(&p.lower, &p.upper, p.domain.clone())?;
    let grid = Grid::new(domain, &p.counts)?;
    let field = NodalField::new(grid, values)?;
    Ok((header, field))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// CSV table: a `# {json}` provenance line, a header row, then rows.
#[derive(Clone, Debug)]
pub struct CsvTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, provenance: &Provenance) -> Result<String> {
        Ok(format!("# {}\n{}", serde_json::to_string(provenance)?, self.render_body()))
    }

    /// Header row and rows, without the provenance line.
    pub fn render_body(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.iter().map(|c| escape(c)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path, provenance: &Provenance) -> Result<()> {
        fs::write(path, self.render(provenance)?)?;
        Ok(())
    }
}

fn escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Shortest round-trip representation of a float.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::CoefficientField;
    use crate::solver::{assemble, sample};

    #[test]
    fn solution_round_trip() {
        let g = Grid::new(Domain::centered_cube(2, 1.0).unwrap(), &[9, 9]).unwrap();
        let de = assemble(&CoefficientField::identity(2), &g).unwrap();
        let sol = ObstacleSolution::from_values(&de, sample(&g, |x| 0.25 * x.norm_squared()), 1e-10).unwrap();
        let dir = std::env::temp_dir().join(format!("obslab-io-{}", std::process::id()));
        let prov = Provenance::new("abc", "radial", &g, 1e-8, 7);
        write_solution(&dir, &sol, &prov).unwrap();
        let (h, f) = read_solution(&dir).unwrap();
        assert_eq!(h.provenance, prov);
        assert_eq!(f.values(), sol.values());
        assert_eq!(f.grid(), &g);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn csv_has_provenance_line() {
        let g = Grid::new(Domain::centered_cube(1, 1.0).unwrap(), &[5]).unwrap();
        let mut t = CsvTable::new(&["r", "note"]);
        t.push(vec![num(0.1), "a,b".into()]);
        let s = t.render(&Provenance::new("h", "s", &g, 1e-8, 0)).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert!(lines[0].starts_with("# {"));
        assert_eq!(lines[1], "r,note");
        assert_eq!(lines[2], "1e-1,\"a,b\"");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
