//! On-disk formats: scene JSON, `PDENS` density text, and binary PGM.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{DensityGrid, Grid, Point2, Scene};

const DENSITY_MAGIC: &str = "PDENS";
const DENSITY_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    width: usize,
    height: usize,
    #[serde(default = "default_stride")]
    stride: usize,
    points: Vec<[f64; 2]>,
}

fn default_stride() -> usize {
    1
}

pub fn parse_scene(text: &str) -> Result<Scene> {
    let raw: SceneFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let points = raw.points.iter().map(|&[r, c]| Point2::new(r, c)).collect();
    Scene::new(raw.height, raw.width, raw.stride, points)
}

pub fn scene_to_json(scene: &Scene) -> String {
    let raw = SceneFile {
        width: scene.width(),
        height: scene.height(),
        stride: scene.stride(),
        points: scene.points().iter().map(|p| [p.row, p.col]).collect(),
    };
    serde_json::to_string(&raw).expect("scene serialization cannot fail")
}

pub fn read_scene(path: impl AsRef<Path>) -> Result<Scene> {
    parse_scene(&read_text(path.as_ref())?)
}

pub fn write_scene(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), scene_to_json(scene).as_bytes())
}

/// Shortest text that parses back to the same `f64`.
pub fn format_real(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn format_grid(grid: &Grid, stride: usize) -> String {
    let (h, w) = grid.shape();
    let mut out = format!("{DENSITY_MAGIC} {DENSITY_VERSION} {h} {w} {stride}\n");
    for row in grid.values().chunks_exact(w) {
        let mut first = true;
        for &v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{}", format_real(v));
        }
        out.push('\n');
    }
    out
}

pub fn format_density(grid: &DensityGrid) -> String {
    format_grid(grid.grid(), grid.stride())
}

/// Parses a `PDENS` file into a grid of finite reals and its stride.
pub fn parse_grid(text: &str) -> Result<(Grid, usize)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty density file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != DENSITY_MAGIC {
        return Err(Error::Parse(format!("bad density header '{header}'")));
    }
    let num = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Parse(format!("bad header field '{s}'")))
    };
    let version = num(fields[1])?;
    if version != DENSITY_VERSION as usize {
        return Err(Error::Parse(format!("unsupported density version {version}")));
    }
    let (h, w, stride) = (num(fields[2])?, num(fields[3])?, num(fields[4])?);
    let mut values = Vec::with_capacity(h * w);
    let mut rows = 0;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("bad value '{tok}' on row {rows}")))?;
            values.push(v);
        }
        if values.len() - before != w {
            return Err(Error::Parse(format!(
                "row {rows} has {} values, header says {w}",
                values.len() - before
            )));
        }
    }
    if rows != h {
        return Err(Error::Parse(format!("found {rows} rows, header says {h}")));
    }
    if stride == 0 {
        return Err(Error::Invalid("stride must be positive".into()));
    }
    Ok((Grid::new(h, w, values)?, stride))
}

pub fn parse_density(text: &str) -> Result<DensityGrid> {
    let (grid, stride) = parse_grid(text)?;
    DensityGrid::from_grid(grid, stride)
}

pub fn read_density(path: impl AsRef<Path>) -> Result<DensityGrid> {
    parse_density(&read_text(path.as_ref())?)
}

pub fn write_density(grid: &DensityGrid, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), format_density(grid).as_bytes())
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<Grid> {
    parse_grid(&read_text(path.as_ref())?).map(|(g, _)| g)
}

pub fn write_grid(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), format_grid(grid, 1).as_bytes())
}

/// Min-max normalization bounds used when quantizing a grid to 8 bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

/// Binary PGM (`P5`, maxval 255) of `grid`, min-max normalized.
pub fn encode_pgm(grid: &Grid) -> (Vec<u8>, Bounds) {
    let (lo, hi) = grid.min_max();
    let span = hi - lo;
    let (h, w) = grid.shape();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(grid.values().iter().map(|&v| {
        if span > 0.0 {
            (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    (out, Bounds { min: lo, max: hi })
}

/// Sidecar path holding the normalization bounds of a PGM image.
pub fn bounds_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("bounds.txt")
}

pub fn format_bounds(b: &Bounds) -> String {
    format!("min {}\nmax {}\n", format_real(b.min), format_real(b.max))
}

pub fn parse_bounds(text: &str) -> Result<Bounds> {
    let mut min = None;
    let mut max = None;
    for line in text.lines() {
        let mut it = line.split_whitespace();
        let (Some(key), Some(val)) = (it.next(), it.next()) else {
            continue;
        };
        let v: f64 = val
            .parse()
            .map_err(|_| Error::Parse(format!("bad bound '{val}'")))?;
        match key {
            "min" => min = Some(v),
            "max" => max = Some(v),
            _ => return Err(Error::Parse(format!("unknown bounds key '{key}'"))),
        }
    }
    match (min, max) {
        (Some(min), Some(max)) => Ok(Bounds { min, max }),
        _ => Err(Error::Parse("bounds file needs min and max".into())),
    }
}

/// Writes `grid` as PGM plus its `.bounds.txt` sidecar.
pub fn write_pgm(grid: &Grid, path: impl AsRef<Path>) -> Result<Bounds> {
    let path = path.as_ref();
    let (bytes, bounds) = encode_pgm(grid);
    write_bytes(path, &bytes)?;
    write_bytes(&bounds_path(path), format_bounds(&bounds).as_bytes())?;
    Ok(bounds)
}

/// Decodes a binary PGM into `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::Parse(format!("not a binary PGM: magic '{}'", fields[0])));
    }
    let parse = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Parse(format!("bad PGM header field '{s}'")))
    };
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(Error::Parse(format!("unsupported maxval {maxval}")));
    }
    let raster = bytes.get(pos..).unwrap_or_default();
    if raster.len() != w * h {
        return Err(Error::Parse(format!(
            "PGM raster has {} bytes, expected {}",
            raster.len(),
            w * h
        )));
    }
    Ok((w, h, raster.to_vec()))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
