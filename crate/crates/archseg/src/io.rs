//! Point cloud and JSON file formats.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use archseg_core::{Point3, PointCloud};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

/// Points with optional per-point instance labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledCloud {
    pub points: Vec<Point3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u32>>,
}

impl LabeledCloud {
    pub fn cloud(&self) -> archseg_core::Result<PointCloud> {
        PointCloud::new(self.points.clone())
    }
}

/// ASCII PLY with `x y z` and, when labels are given, an `instance` property.
pub fn write_ply(path: &Path, points: &[Point3], labels: Option<&[u32]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != points.len() {
            return Err(HarnessError::format(path, "label count differs from point count"));
        }
    }
    let mut out = BufWriter::new(Vec::with_capacity(points.len() * 40));
    let mut body = || -> std::io::Result<()> {
        writeln!(out, "ply\nformat ascii 1.0\nelement vertex {}", points.len())?;
        writeln!(out, "property double x\nproperty double y\nproperty double z")?;
        if labels.is_some() {
            writeln!(out, "property int instance")?;
        }
        writeln!(out, "end_header")?;
        for (i, p) in points.iter().enumerate() {
            match labels {
                Some(l) => writeln!(out, "{} {} {} {}", p.x, p.y, p.z, l[i])?,
                None => writeln!(out, "{} {} {}", p.x, p.y, p.z)?,
            }
        }
        Ok(())
    };
    body().map_err(|e| HarnessError::io(path, e))?;
    let bytes = out.into_inner().map_err(|e| HarnessError::io(path, e.into_error()))?;
    write_file(path, &bytes)
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<String>,
}

/// Reads an ASCII PLY. Vertex properties other than `x`, `y`, `z` and
/// `instance` are ignored, as are non-vertex elements.
pub fn read_ply(path: &Path) -> Result<LabeledCloud> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_ply(&text).map_err(|msg| HarnessError::format(path, msg))
}

pub fn parse_ply(text: &str) -> std::result::Result<LabeledCloud, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing `ply` magic".into());
    }
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let line = lines.next().ok_or("header is not terminated")?.trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err("only ascii PLY is supported".into());
                }
            }
            Some("element") => {
                let name = tok.next().ok_or("element without a name")?.to_string();
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| format!("bad count for element `{name}`"))?;
                elements.push(Element {
                    name,
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or("property before any element")?;
                let name = tok.last().ok_or("property without a name")?;
                el.properties.push(name.to_string());
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => return Err(format!("unexpected header keyword `{other}`")),
        }
    }
    let mut points = Vec::new();
    let mut labels: Option<Vec<u32>> = None;
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                lines.next().ok_or("file ends inside an element")?;
            }
            continue;
        }
        let col = |n: &str| el.properties.iter().position(|p| p == n);
        let (xi, yi, zi) = match (col("x"), col("y"), col("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err("vertex element lacks x/y/z".into()),
        };
        let li = col("instance");
        points.reserve(el.count);
        let mut lab = Vec::with_capacity(if li.is_some() { el.count } else { 0 });
        for k in 0..el.count {
            let line = lines.next().ok_or("file ends inside the vertex list")?;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() < el.properties.len() {
                return Err(format!("vertex {k} has {} values", vals.len()));
            }
            let num = |i: usize| -> std::result::Result<f64, String> {
                vals[i].parse::<f64>().map_err(|_| format!("vertex {k}: bad number `{}`", vals[i]))
            };
            points.push(Point3::new(num(xi)?, num(yi)?, num(zi)?));
            if let Some(li) = li {
                lab.push(
                    vals[li]
                        .parse::<u32>()
                        .map_err(|_| format!("vertex {k}: bad instance `{}`", vals[li]))?,
                );
            }
        }
        if li.is_some() {
            labels = Some(lab);
        }
    }
    Ok(LabeledCloud { points, labels })
}

/// Reads a `.ply` file or the JSON `{"points", "labels"}` form, by extension.
pub fn read_cloud(path: &Path) -> Result<LabeledCloud> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_json(path),
        _ => read_ply(path),
    }
}
