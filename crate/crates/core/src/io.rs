//! Reading and writing spaces, measures, trees, images and results.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! measure written to CSV reads back bit for bit.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OtError, Result};
use crate::limits::LimitSample;
use crate::measures::Measure;
use crate::solver::{DualPair, TransportPlan};
use crate::space::{GridSpace, MetricSpace};
use crate::testing::TestReport;
use crate::tree::WeightedTree;

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader)
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    field.parse::<f64>().map_err(|_| OtError::Parse(format!("line {line}: cannot read {what} from {field:?}")))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

/// Rows of a CSV file with an optional header line (detected when the
/// given column of the first row is neither empty nor a number).
fn records<R: Read>(reader: R, numeric_column: usize) -> Result<(Option<Vec<String>>, Vec<csv::StringRecord>)> {
    let mut rows = Vec::new();
    for rec in csv_reader(reader).records() {
        let rec = rec?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push(rec);
    }
    let header = match rows.first() {
        Some(first) if first.get(numeric_column).is_some_and(|f| !f.is_empty() && f.parse::<f64>().is_err()) => {
            Some(rows.remove(0).iter().map(str::to_string).collect())
        }
        _ => None,
    };
    Ok((header, rows))
}

/// Point ids with their masses, as read from a measure file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassTable {
    pub ids: Vec<String>,
    pub mass: Vec<f64>,
}

impl MassTable {
    /// Lays the masses out on `space` by id; ids absent from the table get
    /// zero mass. With `probability` the masses must already sum to one.
    pub fn on_space(&self, space: &MetricSpace, probability: bool) -> Result<Measure> {
        let index = space.id_index();
        let mut mass = vec![0.0; space.ids().len()];
        for (id, &m) in self.ids.iter().zip(&self.mass) {
            let &i = index.get(id.as_str()).ok_or_else(|| OtError::UnknownId(id.clone()))?;
            mass[i] += m;
        }
        if probability {
            Measure::probability(mass)
        } else {
            Measure::signed(mass)
        }
    }

    /// Masses in file order, for measures given without a space.
    pub fn values(&self) -> &[f64] {
        &self.mass
    }
}

/// Reads `id,mass` rows (header optional).
pub fn read_mass_csv<R: Read>(reader: R) -> Result<MassTable> {
    let (_, rows) = records(reader, 1)?;
    let mut table = MassTable { ids: Vec::with_capacity(rows.len()), mass: Vec::with_capacity(rows.len()) };
    for rec in rows {
        let line = line_of(&rec);
        if rec.len() != 2 {
            return Err(OtError::Parse(format!("line {line}: expected `id,mass`, found {} fields", rec.len())));
        }
        table.ids.push(rec[0].to_string());
        table.mass.push(parse_f64(&rec[1], "mass", line)?);
    }
    Ok(table)
}

pub fn write_mass_csv<W: Write>(writer: W, ids: &[String], mass: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "mass"])?;
    for (id, m) in ids.iter().zip(mass) {
        w.write_record([id.as_str(), &m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a measure file: CSV `id,mass`, or JSON `{"ids": [...], "mass": [...]}`
/// when the extension is `.json`.
pub fn read_mass_file(path: &Path) -> Result<MassTable> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        let table: MassTable = serde_json::from_reader(open(path)?)?;
        if table.ids.len() != table.mass.len() {
            return Err(OtError::DimensionMismatch { expected: table.ids.len(), got: table.mass.len() });
        }
        Ok(table)
    } else {
        read_mass_csv(open(path)?)
    }
}

/// A point set read from CSV, with the masses column if there was one.
#[derive(Debug, Clone)]
pub struct PointsFile {
    pub space: MetricSpace,
    pub mass: Option<Vec<f64>>,
}

/// Reads `id,x1,...,xD[,mass]`. A header is required when a `mass` column
/// is present, and it must name that column `mass`.
pub fn read_points_csv<R: Read>(reader: R) -> Result<PointsFile> {
    let (header, rows) = records(reader, 1)?;
    let has_mass = header.as_ref().and_then(|h| h.last()).is_some_and(|c| c.eq_ignore_ascii_case("mass"));
    let mut ids = Vec::with_capacity(rows.len());
    let mut points = Vec::with_capacity(rows.len());
    let mut mass = Vec::new();
    for rec in rows {
        let line = line_of(&rec);
        let coords_end = if has_mass { rec.len() - 1 } else { rec.len() };
        if coords_end < 2 {
            return Err(OtError::Parse(format!("line {line}: expected an id and at least one coordinate")));
        }
        ids.push(rec[0].to_string());
        points.push((1..coords_end).map(|c| parse_f64(&rec[c], "coordinate", line)).collect::<Result<Vec<_>>>()?);
        if has_mass {
            mass.push(parse_f64(&rec[coords_end], "mass", line)?);
        }
    }
    let space = MetricSpace::from_coordinates(points)?.with_ids(ids)?;
    Ok(PointsFile { space, mass: has_mass.then_some(mass) })
}

/// Reads a dense distance matrix. With a header row (`id,<id1>,...`) each
/// following row starts with its id; without one, rows are plain numbers
/// and ids default to `0, 1, ...`.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<MetricSpace> {
    let (header, rows) = records(reader, 0)?;
    match header {
        Some(h) => {
            let ids: Vec<String> = h[1..].to_vec();
            let mut matrix = Vec::with_capacity(rows.len());
            for (k, rec) in rows.iter().enumerate() {
                let line = line_of(rec);
                if rec.get(0) != ids.get(k).map(String::as_str) {
                    return Err(OtError::Parse(format!("line {line}: row id {:?} does not match the header", &rec[0])));
                }
                matrix.push(rec.iter().skip(1).map(|f| parse_f64(f, "distance", line)).collect::<Result<Vec<_>>>()?);
            }
            MetricSpace::from_matrix(matrix)?.with_ids(ids)
        }
        None => {
            let matrix = rows
                .iter()
                .map(|rec| rec.iter().map(|f| parse_f64(f, "distance", line_of(rec))).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            MetricSpace::from_matrix(matrix)
        }
    }
}

/// Reads a metric space from a points file (header starting `id,x` or
/// `id,x1`) or a distance matrix otherwise.
pub fn read_space_file(path: &Path) -> Result<PointsFile> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text)?;
    let first = text.lines().find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#')).unwrap_or("");
    let second_col = first.split(',').nth(1).map(str::trim).unwrap_or("");
    let is_points = second_col.eq_ignore_ascii_case("x") || second_col.eq_ignore_ascii_case("x1");
    if is_points {
        read_points_csv(text.as_bytes())
    } else {
        Ok(PointsFile { space: read_matrix_csv(text.as_bytes())?, mass: None })
    }
}

/// Reads `node,parent,weight` rows (header optional). The root is the row
/// whose parent is empty or equal to its own id; its weight is ignored.
pub fn read_tree_csv<R: Read>(reader: R) -> Result<(Vec<String>, WeightedTree)> {
    let (_, rows) = records(reader, 2)?;
    let ids: Vec<String> = rows.iter().map(|r| r[0].to_string()).collect();
    let index: std::collections::HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    if index.len() != ids.len() {
        return Err(OtError::Parse("duplicate node ids in tree file".into()));
    }
    let mut parent = Vec::with_capacity(rows.len());
    let mut weight = Vec::with_capacity(rows.len());
    for (i, rec) in rows.iter().enumerate() {
        let line = line_of(rec);
        if rec.len() != 3 {
            return Err(OtError::Parse(format!("line {line}: expected `node,parent,weight`")));
        }
        let p = rec[1].trim();
        parent.push(if p.is_empty() { i } else { *index.get(p).ok_or_else(|| OtError::UnknownId(p.to_string()))? });
        weight.push(if rec[2].trim().is_empty() { 0.0 } else { parse_f64(&rec[2], "weight", line)? });
    }
    Ok((ids, WeightedTree::new(parent, weight)?))
}

pub fn write_tree_csv<W: Write>(writer: W, ids: &[String], tree: &WeightedTree) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["node", "parent", "weight"])?;
    for x in 0..tree.len() {
        w.write_record([ids[x].as_str(), ids[tree.parent(x)].as_str(), &tree.weight(x).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Counts on a square power-of-two grid, read from an image.
#[derive(Debug, Clone)]
pub struct GridCounts {
    pub grid: GridSpace,
    /// Count per grid point (point index `x + side * y` for column `x`,
    /// row `y`).
    pub counts: Vec<u64>,
    /// Total count, used as the sample size.
    pub n: u64,
    /// `(width, height)` before padding, when padding was needed.
    pub padded_from: Option<(usize, usize)>,
}

impl GridCounts {
    pub fn measure(&self) -> Result<Measure> {
        crate::measures::empirical_from_counts(&self.counts)
    }
}

/// Builds grid counts from rows of pixel values, padding with zero rows and
/// columns up to a power-of-two square.
pub fn grid_counts_from_rows(rows: Vec<Vec<u64>>) -> Result<GridCounts> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if height == 0 || width == 0 {
        return Err(OtError::InvalidGrid("empty image".into()));
    }
    if let Some((y, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(OtError::NotSquare { row: y, len: row.len(), expected: width });
    }
    let side = width.max(height).next_power_of_two();
    let grid = GridSpace::new(2, side)?;
    let mut counts = vec![0u64; side * side];
    for (y, row) in rows.iter().enumerate() {
        counts[y * side..y * side + width].copy_from_slice(row);
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(OtError::InvalidMeasure("image has no counts".into()));
    }
    let padded_from = (width != side || height != side).then_some((width, height));
    Ok(GridCounts { grid, counts, n, padded_from })
}

/// Reads a grey-level PGM (plain or raw) or a CSV matrix of nonnegative
/// integer counts (one image row per line).
pub fn ingest_image(path: &Path) -> Result<GridCounts> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes)?;
    let is_pgm = bytes.starts_with(b"P2") || bytes.starts_with(b"P5");
    let rows = if is_pgm { pgm_rows(&bytes)? } else { csv_count_rows(&bytes)? };
    grid_counts_from_rows(rows)
}

fn pgm_rows(bytes: &[u8]) -> Result<Vec<Vec<u64>>> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Pnm)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<u64> = match img {
        image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u64::from).collect(),
        image::DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(u64::from).collect(),
        _ => return Err(OtError::InvalidGrid("only grey-level PGM images are supported".into())),
    };
    Ok(values.chunks(w).take(h).map(<[u64]>::to_vec).collect())
}

fn csv_count_rows(bytes: &[u8]) -> Result<Vec<Vec<u64>>> {
    let (_, rows) = records(bytes, 0)?;
    rows.iter()
        .map(|rec| {
            let line = line_of(rec);
            rec.iter()
                .map(|f| {
                    let v = parse_f64(f, "count", line)?;
                    if v < 0.0 {
                        Err(OtError::InvalidMeasure(format!("line {line}: negative count {v}")))
                    } else if v.fract() != 0.0 || v > u64::MAX as f64 {
                        Err(OtError::Parse(format!("line {line}: count {v} is not a whole number")))
                    } else {
                        Ok(v as u64)
                    }
                })
                .collect()
        })
        .collect()
}

/// Reads one point id per line and tallies them against `space`.
pub fn read_sample_ids<R: Read>(reader: R, space: &MetricSpace) -> Result<Vec<u64>> {
    let index = space.id_index();
    let mut counts = vec![0u64; space.ids().len()];
    let mut text = String::new();
    BufReader::new(reader).read_to_string(&mut text)?;
    for token in text.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
        let &i = index.get(token).ok_or_else(|| OtError::UnknownId(token.to_string()))?;
        counts[i] += 1;
    }
    Ok(counts)
}

pub fn write_plan_csv<W: Write>(writer: W, ids: &[String], plan: &TransportPlan) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["source", "target", "mass"])?;
    for &(x, y, m) in &plan.entries {
        w.write_record([ids[x].as_str(), ids[y].as_str(), &m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dual_csv<W: Write>(writer: W, ids: &[String], dual: &DualPair) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "lambda", "mu"])?;
    for (i, id) in ids.iter().enumerate() {
        w.write_record([id.as_str(), &dual.lambda[i].to_string(), &dual.mu[i].to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One draw per line under a `draw` header.
pub fn write_draws_csv<W: Write>(writer: W, sample: &LimitSample) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["draw"])?;
    for d in &sample.draws {
        w.write_record([d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_draws_csv<R: Read>(reader: R) -> Result<Vec<f64>> {
    let (_, rows) = records(reader, 0)?;
    rows.iter().map(|rec| parse_f64(&rec[0], "draw", line_of(rec))).collect()
}

/// ECDF step points `x,ecdf`.
pub fn write_ecdf_csv<W: Write>(writer: W, sample: &LimitSample) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["x", "ecdf"])?;
    for (x, f) in sample.ecdf_points() {
        w.write_record([x.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `t,statistic,p_value,reject` rows of a threshold sweep.
pub fn write_sweep_csv<W: Write>(writer: W, reports: &[TestReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "statistic", "p_value", "reject"])?;
    for r in reports {
        let t = r.t.map_or(String::new(), |t| t.to_string());
        w.write_record([t, r.statistic.to_string(), r.p_value.to_string(), r.reject.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
