//! File formats: the diagnostics series (CSV), field snapshots (legacy VTK)
//! and extracted curves (CSV).
//!
//! Floats are written with Rust's shortest round-trip formatting, so a row
//! read back parses to the identical value and identical runs produce
//! identical bytes.

use std::fmt::Write as _;
use std::io::{self, Write};

use thiserror::Error;

use crate::diagnostics::EnergyReport;
use crate::geometry::InterfaceCurve;
use crate::grid::ScalarField;

pub const SERIES_COLUMNS: [&str; 16] = [
    "t",
    "E_s",
    "E_p",
    "E",
    "xi",
    "mu_total",
    "stilde",
    "mass_G",
    "phi_min",
    "phi_max",
    "u_min",
    "stilde_l2_accum",
    "area",
    "perimeter",
    "centroid_x",
    "centroid_y",
];

#[derive(Debug, Error)]
pub enum OutputError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("series line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Interface measurements attached to a series row (2D runs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryColumns {
    pub area: f64,
    pub perimeter: f64,
    pub centroid: Option<[f64; 2]>,
}

impl From<&InterfaceCurve> for GeometryColumns {
    fn from(c: &InterfaceCurve) -> Self {
        Self {
            area: c.area,
            perimeter: c.perimeter,
            centroid: c.centroid,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub report: EnergyReport,
    pub geometry: Option<GeometryColumns>,
}

impl SeriesRow {
    /// Equal-area radius, when geometry was recorded.
    pub fn radius(&self) -> Option<f64> {
        self.geometry
            .map(|g| (g.area.max(0.0) / std::f64::consts::PI).sqrt())
    }
}

pub fn series_header() -> String {
    SERIES_COLUMNS.join(",")
}

pub fn format_row(row: &SeriesRow) -> String {
    let r = &row.report;
    let mut s = String::with_capacity(256);
    for v in [
        r.t,
        r.e_s,
        r.e_p,
        r.e,
        r.xi,
        r.mu_total,
        r.stilde,
        r.mass_g,
        r.phi_min,
        r.phi_max,
        r.u_min,
        r.stilde_l2_accum,
    ] {
        let _ = write!(s, "{v},");
    }
    match row.geometry {
        Some(g) => {
            let _ = write!(s, "{},{},", g.area, g.perimeter);
            match g.centroid {
                Some([x, y]) => {
                    let _ = write!(s, "{x},{y}");
                }
                None => s.push(','),
            }
        }
        None => s.push_str(",,,"),
    }
    s
}

/// Streams rows to a writer, flushing each one so partial runs stay readable.
pub struct SeriesWriter<W: Write> {
    inner: W,
}

impl<W: Write> SeriesWriter<W> {
    pub fn new(mut inner: W) -> io::Result<Self> {
        writeln!(inner, "{}", series_header())?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn push(&mut self, row: &SeriesRow) -> io::Result<()> {
        writeln!(self.inner, "{}", format_row(row))?;
        self.inner.flush()
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

/// Parse a series file written by [`SeriesWriter`].
pub fn read_series(text: &str) -> Result<Vec<SeriesRow>, OutputError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == series_header() => {}
        _ => {
            return Err(OutputError::Malformed {
                line: 1,
                message: "unexpected header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| OutputError::Malformed {
            line: i + 1,
            message,
        };
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != SERIES_COLUMNS.len() {
            return Err(bad(format!(
                "expected {} columns, got {}",
                SERIES_COLUMNS.len(),
                cells.len()
            )));
        }
        let num = |k: usize| -> Result<f64, OutputError> {
            cells[k]
                .parse::<f64>()
                .map_err(|e| bad(format!("column {}: {e}", SERIES_COLUMNS[k])))
        };
        let opt = |k: usize| -> Result<Option<f64>, OutputError> {
            if cells[k].is_empty() {
                Ok(None)
            } else {
                num(k).map(Some)
            }
        };
        let report = EnergyReport {
            t: num(0)?,
            e_s: num(1)?,
            e_p: num(2)?,
            e: num(3)?,
            xi: num(4)?,
            mu_total: num(5)?,
            stilde: num(6)?,
            mass_g: num(7)?,
            phi_min: num(8)?,
            phi_max: num(9)?,
            u_min: num(10)?,
            stilde_l2_accum: num(11)?,
        };
        let geometry = match (opt(12)?, opt(13)?) {
            (Some(area), Some(perimeter)) => {
                let centroid = match (opt(14)?, opt(15)?) {
                    (Some(x), Some(y)) => Some([x, y]),
                    _ => None,
                };
                Some(GeometryColumns {
                    area,
                    perimeter,
                    centroid,
                })
            }
            _ => None,
        };
        rows.push(SeriesRow { report, geometry });
    }
    Ok(rows)
}

/// Legacy VTK STRUCTURED_POINTS, ASCII, x fastest, one SCALARS block per field.
pub fn write_vtk<W: Write>(
    mut w: W,
    title: &str,
    fields: &[(&str, &ScalarField)],
) -> io::Result<()> {
    let Some((_, first)) = fields.first() else {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "no fields"));
    };
    let g = first.grid();
    if fields.iter().any(|(_, f)| f.grid() != g) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            "fields live on different grids",
        ));
    }
    let d = g.dims();
    let h = g.spacing();
    let dim = |a: usize| d.get(a).copied().unwrap_or(1);
    let sp = |a: usize| h.get(a).copied().unwrap_or(1.0);
    let org = |a: usize| if a < g.ndim() { 0.5 * h[a] } else { 0.0 };
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.replace('\n', " "))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", dim(0), dim(1), dim(2))?;
    writeln!(w, "ORIGIN {} {} {}", org(0), org(1), org(2))?;
    writeln!(w, "SPACING {} {} {}", sp(0), sp(1), sp(2))?;
    writeln!(w, "POINT_DATA {}", g.len())?;
    for (name, field) in fields {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for row in field.values().chunks(dim(0)) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
    }
    Ok(())
}

/// Read one SCALARS block of a file written by [`write_vtk`]. The grid
/// lengths are recovered as `dims * spacing`.
pub fn read_vtk_field(text: &str, name: &str) -> Result<ScalarField, OutputError> {
    let bad = |line: usize, message: String| OutputError::Malformed { line, message };
    let mut dims: Option<Vec<usize>> = None;
    let mut spacing: Option<Vec<f64>> = None;
    let mut lines = text.lines().enumerate();
    while let Some((i, line)) = lines.next() {
        let mut words = line.split_whitespace();
        match words.next() {
            Some("DIMENSIONS") => {
                let d: Result<Vec<usize>, _> = words.map(str::parse).collect();
                dims = Some(d.map_err(|e| bad(i + 1, format!("DIMENSIONS: {e}")))?);
            }
            Some("SPACING") => {
                let s: Result<Vec<f64>, _> = words.map(str::parse).collect();
                spacing = Some(s.map_err(|e| bad(i + 1, format!("SPACING: {e}")))?);
            }
            Some("SCALARS") if words.next() == Some(name) => {
                let (Some(d), Some(h)) = (&dims, &spacing) else {
                    return Err(bad(i + 1, "SCALARS before DIMENSIONS/SPACING".into()));
                };
                if d.len() != 3 || h.len() != 3 {
                    return Err(bad(i + 1, "expected three dimensions".into()));
                }
                let ndim = if d[2] > 1 { 3 } else { 2 };
                let n: usize = d.iter().product();
                let _lookup = lines.next();
                let mut values = Vec::with_capacity(n);
                for (j, line) in lines.by_ref() {
                    if values.len() == n {
                        break;
                    }
                    for w in line.split_whitespace() {
                        values.push(w.parse::<f64>().map_err(|e| bad(j + 1, e.to_string()))?);
                    }
                }
                if values.len() != n {
                    return Err(bad(
                        i + 1,
                        format!("expected {n} values, got {}", values.len()),
                    ));
                }
                let lengths: Vec<f64> = (0..ndim).map(|a| d[a] as f64 * h[a]).collect();
                let grid = crate::grid::Grid::new(&d[..ndim], &lengths)
                    .map_err(|e| bad(i + 1, e.to_string()))?;
                return ScalarField::new(&grid, values).map_err(|e| bad(i + 1, e.to_string()));
            }
            _ => {}
        }
    }
    Err(bad(0, format!("no SCALARS block named {name}")))
}

/// Vertex list of every loop: `loop,x,y`.
pub fn write_curve_csv<W: Write>(mut w: W, curve: &InterfaceCurve) -> io::Result<()> {
    writeln!(w, "loop,x,y")?;
    for (k, p) in curve.polylines.iter().enumerate() {
        for v in &p.vertices {
            writeln!(w, "{k},{},{}", v[0], v[1])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::extract_contour;
    use crate::grid::Grid;
    use crate::init;

    fn report(t: f64) -> EnergyReport {
        EnergyReport {
            t,
            e_s: 0.1 + t,
            e_p: 1e-20,
            e: 0.1 + t,
            xi: 1.0 / 3.0,
            mu_total: 0.2,
            stilde: -0.0,
            mass_g: 0.05,
            phi_min: 1e-300,
            phi_max: 0.999_999_999_9,
            u_min: 0.5,
            stilde_l2_accum: 0.0,
        }
    }

    #[test]
    fn header_matches_columns() {
        assert_eq!(
            series_header(),
            "t,E_s,E_p,E,xi,mu_total,stilde,mass_G,phi_min,phi_max,u_min,stilde_l2_accum,area,perimeter,centroid_x,centroid_y"
        );
    }

    #[test]
    fn series_round_trip_is_exact() {
        let rows = vec![
            SeriesRow {
                report: report(0.0),
                geometry: Some(GeometryColumns {
                    area: 0.28,
                    perimeter: 1.88,
                    centroid: Some([0.5, 0.25]),
                }),
            },
            SeriesRow {
                report: report(0.01),
                geometry: Some(GeometryColumns {
                    area: 0.0,
                    perimeter: 0.0,
                    centroid: None,
                }),
            },
            SeriesRow {
                report: report(0.02),
                geometry: None,
            },
        ];
        let mut w = SeriesWriter::new(Vec::new()).unwrap();
        for r in &rows {
            w.push(r).unwrap();
        }
        let text = String::from_utf8(w.into_inner()).unwrap();
        let back = read_series(&text).unwrap();
        assert_eq!(back, rows);
        assert!(text.lines().nth(3).unwrap().ends_with(",,,,"));
    }

    #[test]
    fn malformed_series_reports_line() {
        let text = format!("{}\n1,2,3\n", series_header());
        assert!(matches!(
            read_series(&text),
            Err(OutputError::Malformed { line: 2, .. })
        ));
        assert!(read_series("a,b\n").is_err());
    }

    #[test]
    fn vtk_layout() {
        let g = Grid::new(&[8, 8], &[8.0, 1.0]).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0] + 10.0 * x[1]);
        let u = ScalarField::constant(&g, 1.0);
        let mut buf = Vec::new();
        write_vtk(&mut buf, "test", &[("phi", &f), ("u", &u)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# vtk DataFile Version 3.0");
        assert_eq!(lines[3], "DATASET STRUCTURED_POINTS");
        assert_eq!(lines[4], "DIMENSIONS 8 8 1");
        assert_eq!(lines[5], "ORIGIN 0.5 0.0625 0");
        assert_eq!(lines[6], "SPACING 1 0.125 1");
        assert_eq!(lines[7], "POINT_DATA 64");
        assert_eq!(lines[8], "SCALARS phi double 1");
        // x varies fastest along a line.
        assert_eq!(lines[10], "1.125 2.125 3.125 4.125 5.125 6.125 7.125 8.125");
        assert_eq!(lines[11], "2.375 3.375 4.375 5.375 6.375 7.375 8.375 9.375");
        assert_eq!(lines[18], "SCALARS u double 1");
        assert_eq!(text.matches("SCALARS").count(), 2);
        assert_eq!(read_vtk_field(&text, "phi").unwrap(), f);
        assert_eq!(read_vtk_field(&text, "u").unwrap(), u);
        assert!(read_vtk_field(&text, "w").is_err());
    }

    #[test]
    fn curve_csv_lists_vertices() {
        let g = Grid::unit(2, 32).unwrap();
        let c = extract_contour(&init::disk_profile(&g, &[0.5, 0.5], 0.25, 0.03), 0.5).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &c).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + c.vertex_count());
        assert!(text.lines().skip(1).all(|l| l.starts_with("0,")));
    }
}
