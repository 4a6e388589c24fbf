//! Point-cloud data model plus XYZ and PLY file I/O.
//!
//! The XYZ text format holds one point per line, `x y z [linearity] [label]`,
//! whitespace separated. Lines starting with `#` are comments; a
//! `#fields x y z linearity` header marks a 4-column file as carrying
//! linearity instead of a label.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::ops::{Add, Sub};
use std::path::Path;

use crate::error::{contract, io_err, Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Point3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_f64(x: f64, y: f64, z: f64) -> Self {
        Self::new(T::lit(x), T::lit(y), T::lit(z))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn distance_squared(self, o: Self) -> T {
        (self - o).norm_squared()
    }

    pub fn distance(self, o: Self) -> T {
        self.distance_squared(o).sqrt()
    }

    pub fn axis(&self, a: usize) -> T {
        match a {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl<T: Real> Add for Point3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Point3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Per-point class. Wood is the positive class for every metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum ClassLabel {
    #[default]
    Leaf = 0,
    Wood = 1,
}

impl ClassLabel {
    pub fn from_index(v: usize) -> Option<Self> {
        match v {
            0 => Some(Self::Leaf),
            1 => Some(Self::Wood),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_wood(self) -> bool {
        self == Self::Wood
    }

    /// Brown for wood, green for leaf.
    pub fn rgb(self) -> [u8; 3] {
        match self {
            Self::Wood => WOOD_RGB,
            Self::Leaf => LEAF_RGB,
        }
    }
}

pub const WOOD_RGB: [u8; 3] = [139, 69, 19];
pub const LEAF_RGB: [u8; 3] = [34, 139, 34];

/// Ordered points with optional per-point labels and linearity.
///
/// Point order is the file order and every pipeline stage preserves it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledCloud<T> {
    points: Vec<Point3<T>>,
    labels: Option<Vec<ClassLabel>>,
    linearity: Option<Vec<T>>,
}

impl<T: Real> LabeledCloud<T> {
    pub fn new(points: Vec<Point3<T>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return contract(format!("point {i} has a non-finite coordinate"));
        }
        Ok(Self {
            points,
            labels: None,
            linearity: None,
        })
    }

    pub fn with_labels(mut self, labels: Vec<ClassLabel>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return contract(format!(
                "{} labels for {} points",
                labels.len(),
                self.points.len()
            ));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_linearity(mut self, linearity: Vec<T>) -> Result<Self> {
        if linearity.len() != self.points.len() {
            return contract(format!(
                "{} linearity values for {} points",
                linearity.len(),
                self.points.len()
            ));
        }
        if let Some(i) = linearity
            .iter()
            .position(|&v| !(v >= T::zero() && v <= T::one()))
        {
            return contract(format!("linearity at point {i} outside [0,1]"));
        }
        self.linearity = Some(linearity);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn without_linearity(mut self) -> Self {
        self.linearity = None;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[ClassLabel]> {
        self.labels.as_deref()
    }

    pub fn linearity(&self) -> Option<&[T]> {
        self.linearity.as_deref()
    }

    /// Sub-cloud of the given indices, in the given order, carrying attributes along.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            linearity: self
                .linearity
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Same cloud with coordinates replaced; attributes are kept.
    pub fn with_points(&self, points: Vec<Point3<T>>) -> Result<Self> {
        if points.len() != self.points.len() {
            return contract("replacement point count differs");
        }
        let mut out = Self::new(points)?;
        out.labels = self.labels.clone();
        out.linearity = self.linearity.clone();
        Ok(out)
    }

    /// Converts the scalar type through `f64`.
    pub fn cast<U: Real>(&self) -> LabeledCloud<U> {
        let c = |v: T| U::lit(v.to_f64_lossless());
        LabeledCloud {
            points: self
                .points
                .iter()
                .map(|p| Point3::new(c(p.x), c(p.y), c(p.z)))
                .collect(),
            labels: self.labels.clone(),
            linearity: self
                .linearity
                .as_ref()
                .map(|l| l.iter().map(|&v| c(v)).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Linearity,
    Label,
}

fn parse_fields_header(rest: &str) -> Option<Vec<Column>> {
    let names: Vec<&str> = rest.split_whitespace().collect();
    if names.len() < 3 || names[..3] != ["x", "y", "z"] {
        return None;
    }
    names[3..]
        .iter()
        .map(|n| match *n {
            "linearity" => Some(Column::Linearity),
            "label" => Some(Column::Label),
            _ => None,
        })
        .collect()
}

/// Reads an ASCII XYZ file.
pub fn load_xyz<T: Real>(path: impl AsRef<Path>) -> Result<LabeledCloud<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_xyz(&text, path)
}

pub(crate) fn parse_xyz<T: Real>(text: &str, path: &Path) -> Result<LabeledCloud<T>> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let domain_err = |line: usize, msg: String| Error::Domain {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut declared: Option<Vec<Column>> = None;
    let mut width: Option<usize> = None;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut linearity = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(rest) = comment.trim_start().strip_prefix("fields") {
                if !points.is_empty() {
                    return Err(parse_err(line_no, "#fields header after data".into()));
                }
                let cols = parse_fields_header(rest)
                    .ok_or_else(|| parse_err(line_no, format!("bad header `{line}`")))?;
                declared = Some(cols);
            }
            continue;
        }

        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(3..=5).contains(&fields.len()) {
            return Err(parse_err(
                line_no,
                format!("expected 3 to 5 fields, found {}", fields.len()),
            ));
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    msg: format!(
                        "line {line_no} has {} fields but earlier lines have {w}",
                        fields.len()
                    ),
                })
            }
            _ => {}
        }

        let mut xyz = [T::zero(); 3];
        for (k, f) in fields[..3].iter().enumerate() {
            let v: T = f
                .parse()
                .map_err(|_| parse_err(line_no, format!("not a number: `{f}`")))?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("non-finite coordinate `{f}`")));
            }
            xyz[k] = v;
        }
        points.push(Point3::from_array(xyz));

        let columns: Vec<Column> = match (&declared, fields.len()) {
            (Some(cols), n) => {
                if cols.len() != n - 3 {
                    return Err(Error::Format {
                        path: path.to_path_buf(),
                        msg: format!(
                            "line {line_no} has {n} fields but header declares {}",
                            cols.len() + 3
                        ),
                    });
                }
                cols.clone()
            }
            (None, 3) => vec![],
            (None, 4) => vec![Column::Label],
            (None, _) => vec![Column::Linearity, Column::Label],
        };
        for (col, f) in columns.iter().zip(&fields[3..]) {
            match col {
                Column::Label => {
                    let v: i64 = f
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("label not an integer: `{f}`")))?;
                    let label = usize::try_from(v)
                        .ok()
                        .and_then(ClassLabel::from_index)
                        .ok_or_else(|| domain_err(line_no, format!("label {v} not in {{0,1}}")))?;
                    labels.push(label);
                }
                Column::Linearity => {
                    let v: T = f
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("not a number: `{f}`")))?;
                    if !(v >= T::zero() && v <= T::one()) {
                        return Err(domain_err(line_no, format!("linearity {f} outside [0,1]")));
                    }
                    linearity.push(v);
                }
            }
        }
    }

    let mut cloud = LabeledCloud::new(points)?;
    if !labels.is_empty() {
        cloud = cloud.with_labels(labels)?;
    }
    if !linearity.is_empty() {
        cloud = cloud.with_linearity(linearity)?;
    }
    Ok(cloud)
}

pub(crate) fn format_xyz<T: Real>(cloud: &LabeledCloud<T>) -> String {
    let mut out = String::with_capacity(cloud.len() * 48);
    out.push_str("#fields x y z");
    if cloud.linearity.is_some() {
        out.push_str(" linearity");
    }
    if cloud.labels.is_some() {
        out.push_str(" label");
    }
    out.push('\n');
    for (i, p) in cloud.points.iter().enumerate() {
        // Display for floats is the shortest representation that round-trips.
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(l) = &cloud.linearity {
            let _ = write!(out, " {}", l[i]);
        }
        if let Some(l) = &cloud.labels {
            let _ = write!(out, " {}", l[i].index());
        }
        out.push('\n');
    }
    out
}

/// Writes an ASCII XYZ file that [`load_xyz`] reads back unchanged.
pub fn save_xyz<T: Real>(cloud: &LabeledCloud<T>, path: impl AsRef<Path>) -> Result<()> {
    if cloud.is_empty() {
        return contract("refusing to save an empty cloud");
    }
    write_atomic(path.as_ref(), format_xyz(cloud).as_bytes())
}

/// Writes to a temporary file in the target directory, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    #[default]
    Ascii,
    BinaryLittleEndian,
}

/// Exports a PLY file with brown wood and green leaf vertex colors.
///
/// Coordinates are written as `float` for `f32` clouds and `double` otherwise.
pub fn export_colored_ply<T: Real>(
    cloud: &LabeledCloud<T>,
    labels: &[ClassLabel],
    path: impl AsRef<Path>,
    encoding: PlyEncoding,
) -> Result<()> {
    if labels.len() != cloud.len() {
        return contract(format!(
            "{} labels for {} points",
            labels.len(),
            cloud.len()
        ));
    }
    let single = std::mem::size_of::<T>() == 4;
    let ty = if single { "float" } else { "double" };
    let fmt = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    let mut buf = Vec::with_capacity(cloud.len() * 32 + 256);
    {
        let mut w = BufWriter::new(&mut buf);
        let hdr = format!(
            "ply\nformat {fmt} 1.0\ncomment wood=brown leaf=green\nelement vertex {}\n\
             property {ty} x\nproperty {ty} y\nproperty {ty} z\n\
             property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
            cloud.len()
        );
        let io = |e| Error::Io {
            path: path.as_ref().to_path_buf(),
            source: e,
        };
        w.write_all(hdr.as_bytes()).map_err(io)?;
        for (p, l) in cloud.points.iter().zip(labels) {
            let [r, g, b] = l.rgb();
            match encoding {
                PlyEncoding::Ascii => {
                    writeln!(w, "{} {} {} {r} {g} {b}", p.x, p.y, p.z).map_err(io)?;
                }
                PlyEncoding::BinaryLittleEndian => {
                    for v in p.to_array() {
                        let v = v.to_f64_lossless();
                        if single {
                            w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
                        } else {
                            w.write_all(&v.to_le_bytes()).map_err(io)?;
                        }
                    }
                    w.write_all(&[r, g, b]).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)?;
    }
    write_atomic(path.as_ref(), &buf)
}
