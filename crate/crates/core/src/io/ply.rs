//! Binary little-endian PLY with one `vertex` element.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::types::{GaussianPrimitive, PointCloud, Scene, N_PARAMS};

/// Per-vertex properties of a scene file, in parameter-vector order.
pub const SCENE_PROPERTIES: [&str; N_PARAMS] = [
    "x", "y", "z", "rot_0", "rot_1", "rot_2", "rot_3", "scale_0", "scale_1", "scale_2", "sh_0", "sh_1", "sh_2",
    "sh_3", "sh_4", "sh_5", "sh_6", "sh_7", "sh_8", "sh_9", "sh_10", "sh_11", "sh_12", "sh_13", "sh_14", "sh_15",
    "ke_fwd", "ke_bwd",
];

const META_PREFIX: &str = "meta ";

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Header {
    count: usize,
    properties: Vec<(String, Scalar)>,
    metadata: Vec<(String, String)>,
}

impl Header {
    fn find(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|(n, _)| n == name)
    }
}

fn read_header(r: &mut impl BufRead) -> Result<Header> {
    let mut line = String::new();
    let mut next = |line: &mut String| -> Result<bool> {
        line.clear();
        let n = r.read_line(line).map_err(|e| Error::Ply(format!("reading header: {e}")))?;
        Ok(n > 0)
    };
    if !next(&mut line)? || line.trim_end() != "ply" {
        return Err(Error::Ply("missing 'ply' magic".into()));
    }
    let mut header = Header {
        count: 0,
        properties: Vec::new(),
        metadata: Vec::new(),
    };
    let mut in_vertex = false;
    let mut seen_vertex = false;
    let mut format_ok = false;
    loop {
        if !next(&mut line)? {
            return Err(Error::Ply("header has no 'end_header'".into()));
        }
        let l = line.trim_end_matches(['\n', '\r']);
        let mut words = l.split_whitespace();
        match words.next() {
            Some("format") => {
                let fmt = words.next().unwrap_or("");
                if fmt != "binary_little_endian" {
                    return Err(Error::Ply(format!("unsupported format '{fmt}'")));
                }
                format_ok = true;
            }
            Some("comment") => {
                if let Some(rest) = l.strip_prefix("comment ").and_then(|s| s.strip_prefix(META_PREFIX)) {
                    if let Some((k, v)) = rest.split_once('=') {
                        header.metadata.push((k.to_string(), v.to_string()));
                    }
                }
            }
            Some("obj_info") | None => {}
            Some("element") => {
                let name = words.next().unwrap_or("");
                let count = words.next().and_then(|c| c.parse::<usize>().ok());
                if seen_vertex {
                    // Later elements are never read.
                    in_vertex = false;
                    continue;
                }
                if name != "vertex" {
                    return Err(Error::Ply(format!("element '{name}' before 'vertex' is not supported")));
                }
                header.count = count.ok_or_else(|| Error::Ply(format!("bad element line '{l}'")))?;
                in_vertex = true;
                seen_vertex = true;
            }
            Some("property") => {
                if !in_vertex {
                    continue;
                }
                let ty = words.next().unwrap_or("");
                if ty == "list" {
                    return Err(Error::Ply("list properties on vertices are not supported".into()));
                }
                let scalar = Scalar::parse(ty).ok_or_else(|| Error::Ply(format!("unknown property type '{ty}'")))?;
                let name = words.next().ok_or_else(|| Error::Ply(format!("bad property line '{l}'")))?;
                header.properties.push((name.to_string(), scalar));
            }
            Some("end_header") => break,
            Some(other) => return Err(Error::Ply(format!("unexpected header keyword '{other}'"))),
        }
    }
    if !format_ok {
        return Err(Error::Ply("header has no format line".into()));
    }
    if !seen_vertex {
        return Err(Error::Ply("no vertex element".into()));
    }
    Ok(header)
}

/// Header plus all vertex rows decoded to `f64`.
fn read_vertices(path: &Path) -> Result<(Header, Vec<f64>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let header = read_header(&mut r)?;
    let stride: usize = header.properties.iter().map(|(_, t)| t.size()).sum();
    let mut raw = vec![0u8; stride * header.count];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Ply(format!("file ends before {} vertices", header.count)))?;
    let n_props = header.properties.len();
    let mut values = Vec::with_capacity(n_props * header.count);
    for row in raw.chunks_exact(stride.max(1)).take(header.count) {
        let mut off = 0;
        for (_, t) in &header.properties {
            values.push(t.read(&row[off..]));
            off += t.size();
        }
    }
    Ok((header, values))
}

fn write_header(w: &mut impl Write, count: usize, props: &[&str], metadata: &[(String, String)]) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    for (k, v) in metadata {
        let clean = |s: &str| s.replace(['\n', '\r'], " ");
        writeln!(w, "comment {META_PREFIX}{}={}", clean(k).replace('=', "_"), clean(v))?;
    }
    writeln!(w, "element vertex {count}")?;
    for p in props {
        writeln!(w, "property double {p}")?;
    }
    writeln!(w, "end_header")
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<std::fs::File>) -> std::io::Result<()>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Writes every primitive parameter as a double; metadata goes into comments.
pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    let meta: Vec<(String, String)> = scene.metadata.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    write_file(path, |w| {
        write_header(w, scene.len(), &SCENE_PROPERTIES, &meta)?;
        for p in &scene.primitives {
            for v in p.to_params() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    })
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let (header, values) = read_vertices(path)?;
    let missing: Vec<String> = SCENE_PROPERTIES
        .iter()
        .filter(|p| header.find(p).is_none())
        .map(|p| p.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingProperties(missing));
    }
    if let Some((name, _)) = header.properties.iter().find(|(n, _)| !SCENE_PROPERTIES.contains(&n.as_str())) {
        return Err(Error::Ply(format!("unknown vertex property '{name}'")));
    }
    let cols: Vec<usize> = SCENE_PROPERTIES.iter().map(|p| header.find(p).unwrap()).collect();
    let n_props = header.properties.len();
    let mut scene = Scene::default();
    for row in values.chunks_exact(n_props) {
        let mut p = [0.0; N_PARAMS];
        for (dst, &c) in p.iter_mut().zip(&cols) {
            *dst = row[c];
        }
        scene.primitives.push(GaussianPrimitive::from_params(&p));
    }
    scene.metadata = header.metadata.into_iter().collect();
    Ok(scene)
}

/// Plain points for external viewers: `x y z` plus `weight` when present.
pub fn save_points(cloud: &PointCloud, path: &Path) -> Result<()> {
    let props: &[&str] = if cloud.weights.is_some() {
        &["x", "y", "z", "weight"]
    } else {
        &["x", "y", "z"]
    };
    write_file(path, |w| {
        write_header(w, cloud.len(), props, &[])?;
        for (i, p) in cloud.points.iter().enumerate() {
            for v in p.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
            if let Some(ws) = &cloud.weights {
                w.write_all(&ws[i].to_le_bytes())?;
            }
        }
        Ok(())
    })
}

/// Points from any vertex PLY. Scene files yield primitive centers weighted by
/// their DC phase; otherwise an optional `weight` property is kept.
pub fn load_point_cloud(path: &Path) -> Result<PointCloud> {
    let (header, values) = read_vertices(path)?;
    if SCENE_PROPERTIES.iter().all(|p| header.find(p).is_some()) {
        return Ok(load_scene(path)?.to_point_cloud());
    }
    let need = |n: &str| header.find(n);
    let (Some(x), Some(y), Some(z)) = (need("x"), need("y"), need("z")) else {
        let missing = ["x", "y", "z"].iter().filter(|p| need(p).is_none()).map(|p| p.to_string()).collect();
        return Err(Error::MissingProperties(missing));
    };
    let wcol = need("weight");
    let n_props = header.properties.len().max(1);
    let rows = values.chunks_exact(n_props);
    let mut cloud = PointCloud::default();
    let mut weights = Vec::new();
    for row in rows {
        cloud.points.push(Vector3::new(row[x], row[y], row[z]));
        if let Some(w) = wcol {
            weights.push(row[w]);
        }
    }
    if wcol.is_some() {
        cloud.weights = Some(weights);
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Quaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scene(n: usize) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut scene = Scene::new(
            (0..n)
                .map(|_| {
                    let mut p = [0.0; N_PARAMS];
                    for v in p.iter_mut() {
                        *v = rng.gen_range(-5.0..5.0);
                    }
                    GaussianPrimitive::from_params(&p)
                })
                .collect(),
        );
        scene.metadata.insert("seed".into(), "1".into());
        scene.metadata.insert("note".into(), "two words".into());
        scene
    }

    #[test]
    fn scene_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ply");
        let mut scene = random_scene(100);
        scene.primitives[0].rotation = Quaternion::new(1e-300, -0.0, f64::MIN_POSITIVE, 1.0);
        save_scene(&scene, &path).unwrap();
        let back = load_scene(&path).unwrap();
        assert_eq!(back.len(), 100);
        for (a, b) in scene.primitives.iter().zip(&back.primitives) {
            let bits = |p: &GaussianPrimitive| p.to_params().map(f64::to_bits);
            assert_eq!(bits(a), bits(b));
        }
        assert_eq!(back.metadata, scene.metadata);
    }

    #[test]
    fn plain_points_export_and_missing_properties() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ply");
        let scene = random_scene(37);
        save_points(&scene.to_point_cloud(), &path).unwrap();
        let cloud = load_point_cloud(&path).unwrap();
        assert_eq!(cloud.len(), 37);
        assert_eq!(cloud, scene.to_point_cloud());
        match load_scene(&path) {
            Err(Error::MissingProperties(m)) => {
                assert_eq!(m.len(), N_PARAMS - 3);
                assert!(m.contains(&"rot_0".to_string()) && m.contains(&"ke_bwd".to_string()));
            }
            other => panic!("expected missing properties, got {other:?}"),
        }
    }

    #[test]
    fn scene_file_loads_as_weighted_cloud() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ply");
        let scene = random_scene(5);
        save_scene(&scene, &path).unwrap();
        assert_eq!(load_point_cloud(&path).unwrap(), scene.to_point_cloud());
    }

    #[test]
    fn malformed_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        let cases: [&[u8]; 5] = [
            b"plx\n",
            b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n",
            b"ply\nformat binary_little_endian 1.0\nelement vertex 2\nproperty double x\nend_header\n\0\0",
            b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty quad x\nend_header\n",
            b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty double x\n",
        ];
        for bytes in cases {
            std::fs::write(&path, bytes).unwrap();
            assert!(matches!(load_point_cloud(&path), Err(Error::Ply(_))), "{}", String::from_utf8_lossy(bytes));
        }
        assert!(matches!(load_scene(&dir.path().join("none.ply")), Err(Error::Io { .. })));
    }

    #[test]
    fn unknown_property_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.ply");
        let mut props: Vec<&str> = SCENE_PROPERTIES.to_vec();
        props.push("opacity");
        write_file(&path, |w| {
            write_header(w, 1, &props, &[])?;
            w.write_all(&vec![0u8; 8 * props.len()])
        })
        .unwrap();
        assert!(matches!(load_scene(&path), Err(Error::Ply(m)) if m.contains("opacity")));
    }

    #[test]
    fn reads_float_properties_from_other_tools() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.ply");
        let mut bytes = b"ply\nformat binary_little_endian 1.0\ncomment made elsewhere\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nend_header\n".to_vec();
        for (v, c) in [([1.0f32, 2.0, 3.0], 7u8), ([-1.0, 0.5, 0.25], 9)] {
            for x in v {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
            bytes.push(c);
        }
        std::fs::write(&path, bytes).unwrap();
        let cloud = load_point_cloud(&path).unwrap();
        assert_eq!(cloud.points[1], Vector3::new(-1.0, 0.5, 0.25));
        assert!(cloud.weights.is_none());
    }
}
