//! Fixtures and independent reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use leafwood_core::cloud::{ClassLabel, Point3};
use nalgebra::{Matrix3, SymmetricEigen, Vector3};

pub mod gradcheck;

pub fn line(n: usize, pitch: f64) -> Vec<Point3<f64>> {
    (0..n)
        .map(|i| Point3::new(i as f64 * pitch, 0.0, 0.0))
        .collect()
}

/// Square grid clipped to a disc; index 0 is the center.
pub fn disc(radius: f64, pitch: f64) -> Vec<Point3<f64>> {
    let m = (radius / pitch).round() as i64;
    let mut out = vec![Point3::new(0.0, 0.0, 0.0)];
    for i in -m..=m {
        for j in -m..=m {
            let (x, y) = (i as f64 * pitch, j as f64 * pitch);
            if (i, j) != (0, 0) && x * x + y * y <= radius * radius {
                out.push(Point3::new(x, y, 0.0));
            }
        }
    }
    out
}

/// Vertical cylinder surface on a regular grid, built from scratch.
pub fn cylinder(radius: f64, length: f64, pitch: f64) -> Vec<Point3<f64>> {
    let around = (2.0 * std::f64::consts::PI * radius / pitch).ceil() as usize;
    let along = (length / pitch).ceil() as usize;
    let mut out = Vec::new();
    for j in 0..along {
        let z = (j as f64 + 0.5) * length / along as f64;
        for i in 0..around {
            let t = 2.0 * std::f64::consts::PI * i as f64 / around as f64;
            out.push(Point3::new(radius * t.cos(), radius * t.sin(), z));
        }
    }
    out
}

/// Descending eigenvalues of a sample covariance via nalgebra.
pub fn oracle_eigenvalues(points: &[Point3<f64>]) -> [f64; 3] {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |a: Vector3<f64>, p| {
        a + Vector3::new(p.x, p.y, p.z)
    }) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = Vector3::new(p.x, p.y, p.z) - mean;
        cov += d * d.transpose();
    }
    cov /= n - 1.0;
    let mut e: Vec<f64> = SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    e.sort_by(|a, b| b.partial_cmp(a).unwrap());
    [e[0], e[1], e[2]]
}

pub fn oracle_linearity_at(points: &[Point3<f64>], c: usize, r: f64) -> f64 {
    let nb: Vec<Point3<f64>> = points
        .iter()
        .copied()
        .filter(|p| {
            let d = *p - points[c];
            d.x * d.x + d.y * d.y + d.z * d.z <= r * r
        })
        .collect();
    if nb.len() < 3 {
        return 0.0;
    }
    let e = oracle_eigenvalues(&nb);
    let l1 = e[0].max(0.0);
    if l1 == 0.0 {
        return 0.0;
    }
    ((l1 - e[1].max(0.0)) / l1).clamp(0.0, 1.0)
}

pub fn oracle_field(points: &[Point3<f64>], r: f64) -> Vec<f64> {
    (0..points.len())
        .map(|c| oracle_linearity_at(points, c, r))
        .collect()
}

/// Greedy max-min selection: a taken-flag array and a running minimum of
/// squared distances, updated after every pick.
pub fn brute_fps(points: &[Point3<f64>], k: usize, start: usize) -> Vec<usize> {
    let n = points.len();
    let sq = |a: Point3<f64>, b: Point3<f64>| {
        let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
        dx * dx + dy * dy + dz * dz
    };
    let mut taken = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut chosen = Vec::with_capacity(k);
    let mut last = start;
    loop {
        taken[last] = true;
        chosen.push(last);
        if chosen.len() == k {
            return chosen;
        }
        for i in 0..n {
            nearest[i] = nearest[i].min(sq(points[i], points[last]));
        }
        let mut best = usize::MAX;
        for i in 0..n {
            if !taken[i] && (best == usize::MAX || nearest[i] > nearest[best]) {
                best = i;
            }
        }
        last = best;
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleMetrics {
    pub oa: f64,
    pub iou_wood: f64,
    pub iou_leaf: f64,
    pub miou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

fn ratio(num: u64, den: u64, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

/// One pass over the label pairs, formulas applied directly.
pub fn oracle_metrics(pred: &[ClassLabel], truth: &[ClassLabel]) -> OracleMetrics {
    let (mut tp, mut tn, mut fp, mut fn_) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == ClassLabel::Wood, t == ClassLabel::Wood) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp, 0.0);
    let recall = ratio(tp, tp + fn_, 0.0);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let iou_wood = ratio(tp, tp + fp + fn_, 1.0);
    let iou_leaf = ratio(tn, tn + fp + fn_, 1.0);
    OracleMetrics {
        oa: ratio(tp + tn, tp + tn + fp + fn_, f64::NAN),
        iou_wood,
        iou_leaf,
        miou: (iou_wood + iou_leaf) / 2.0,
        precision,
        recall,
        f1,
        sensitivity: ratio(tp, tp + fn_, 0.0),
        specificity: ratio(tn, tn + fp, 0.0),
    }
}

/// Minimal PLY 1.0 reader (ascii and binary_little_endian, scalar properties only).
#[derive(Debug)]
pub struct Ply {
    pub format: String,
    pub properties: Vec<(String, String)>,
    pub vertices: Vec<Vec<f64>>,
}

impl Ply {
    pub fn column(&self, name: &str) -> Vec<f64> {
        let k = self
            .properties
            .iter()
            .position(|(_, n)| n == name)
            .unwrap_or_else(|| panic!("no property {name}"));
        self.vertices.iter().map(|v| v[k]).collect()
    }
}

pub fn read_ply(bytes: &[u8]) -> Result<Ply, String> {
    let end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or("no end_header")?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|e| e.to_string())?;
    let body = &bytes[end + 11..];
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err("missing magic".into());
    }
    let mut format = String::new();
    let mut count = None;
    let mut properties = Vec::new();
    for l in lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        match f.as_slice() {
            ["format", fmt, "1.0"] => format = fmt.to_string(),
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|e| e.to_string())?)
            }
            ["element", other, _] => return Err(format!("unexpected element {other}")),
            ["property", ty, name] => properties.push((ty.to_string(), name.to_string())),
            ["comment", ..] | [] => {}
            _ => return Err(format!("bad header line `{l}`")),
        }
    }
    let count = count.ok_or("no vertex element")?;
    let mut vertices = Vec::with_capacity(count);
    match format.as_str() {
        "ascii" => {
            let text = std::str::from_utf8(body).map_err(|e| e.to_string())?;
            let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            if rows.len() != count {
                return Err(format!("{} rows for {count} vertices", rows.len()));
            }
            for r in rows {
                let v: Vec<f64> = r
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| e.to_string()))
                    .collect::<Result<_, _>>()?;
                if v.len() != properties.len() {
                    return Err("wrong field count".into());
                }
                vertices.push(v);
            }
        }
        "binary_little_endian" => {
            let mut at = 0;
            let mut take = |n: usize| -> Result<&[u8], String> {
                let s = body.get(at..at + n).ok_or("truncated body")?;
                at += n;
                Ok(s)
            };
            for _ in 0..count {
                let mut v = Vec::with_capacity(properties.len());
                for (ty, _) in &properties {
                    let x = match ty.as_str() {
                        "double" | "float64" => f64::from_le_bytes(take(8)?.try_into().unwrap()),
                        "float" | "float32" => {
                            f32::from_le_bytes(take(4)?.try_into().unwrap()) as f64
                        }
                        "uchar" | "uint8" => take(1)?[0] as f64,
                        t => return Err(format!("unsupported type {t}")),
                    };
                    v.push(x);
                }
                vertices.push(v);
            }
            if at != body.len() {
                return Err("trailing bytes".into());
            }
        }
        f => return Err(format!("unsupported format {f}")),
    }
    Ok(Ply {
        format,
        properties,
        vertices,
    })
}
