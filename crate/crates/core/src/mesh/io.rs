//! Mesh file readers: Gmsh ASCII v2.2 and the plain `.tet` format.

use super::MeshError;
use crate::Vec3;
use std::collections::HashMap;

fn parse_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parses a Gmsh ASCII v2.2 file. Only `$MeshFormat`, `$Nodes` and
/// `$Elements` sections are consumed; element type 4 (4-node tetrahedron)
/// is kept and every other element type is ignored. Node order is
/// preserved from the file; Gmsh node ids may be non-contiguous.
pub fn parse_gmsh_v2(text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 4]>), MeshError> {
    let mut lines = text.lines().enumerate().peekable();
    let mut nodes: Vec<Vec3> = Vec::new();
    let mut id_map: HashMap<u64, usize> = HashMap::new();
    let mut tets: Vec<[usize; 4]> = Vec::new();
    let mut saw_format = false;

    while let Some((ln, line)) = lines.next() {
        let line = line.trim();
        match line {
            "$MeshFormat" => {
                let (ln2, fmt) = lines
                    .next()
                    .ok_or_else(|| parse_err(ln + 1, "truncated $MeshFormat"))?;
                let mut it = fmt.split_whitespace();
                let version = it.next().unwrap_or("");
                if !version.starts_with("2.") {
                    return Err(parse_err(
                        ln2 + 1,
                        format!("unsupported Gmsh format version {version} (expected 2.x ASCII)"),
                    ));
                }
                let filetype = it.next().unwrap_or("");
                if filetype != "0" {
                    return Err(parse_err(ln2 + 1, "binary Gmsh files are not supported"));
                }
                saw_format = true;
                skip_until(&mut lines, "$EndMeshFormat");
            }
            "$Nodes" => {
                let (ln2, count) = lines
                    .next()
                    .ok_or_else(|| parse_err(ln + 1, "truncated $Nodes"))?;
                let n: usize = count
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(ln2 + 1, "bad node count"))?;
                for _ in 0..n {
                    let (ln3, row) = lines
                        .next()
                        .ok_or_else(|| parse_err(ln2 + 1, "truncated node list"))?;
                    let mut it = row.split_whitespace();
                    let id: u64 = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| parse_err(ln3 + 1, "bad node id"))?;
                    let mut xyz = [0.0; 3];
                    for x in &mut xyz {
                        *x = it
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| parse_err(ln3 + 1, "bad node coordinate"))?;
                    }
                    id_map.insert(id, nodes.len());
                    nodes.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
                }
                skip_until(&mut lines, "$EndNodes");
            }
            "$Elements" => {
                let (ln2, count) = lines
                    .next()
                    .ok_or_else(|| parse_err(ln + 1, "truncated $Elements"))?;
                let n: usize = count
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(ln2 + 1, "bad element count"))?;
                for _ in 0..n {
                    let (ln3, row) = lines
                        .next()
                        .ok_or_else(|| parse_err(ln2 + 1, "truncated element list"))?;
                    let fields: Vec<&str> = row.split_whitespace().collect();
                    if fields.len() < 3 {
                        return Err(parse_err(ln3 + 1, "bad element row"));
                    }
                    let etype: u32 = fields[1]
                        .parse()
                        .map_err(|_| parse_err(ln3 + 1, "bad element type"))?;
                    if etype != 4 {
                        continue; // only linear tets are consumed
                    }
                    let ntags: usize = fields[2]
                        .parse()
                        .map_err(|_| parse_err(ln3 + 1, "bad tag count"))?;
                    let node_fields = &fields[3 + ntags..];
                    if node_fields.len() != 4 {
                        return Err(parse_err(
                            ln3 + 1,
                            format!("tet element expects 4 nodes, got {}", node_fields.len()),
                        ));
                    }
                    let mut t = [0usize; 4];
                    for (k, s) in node_fields.iter().enumerate() {
                        let id: u64 = s
                            .parse()
                            .map_err(|_| parse_err(ln3 + 1, "bad element node id"))?;
                        t[k] = *id_map
                            .get(&id)
                            .ok_or_else(|| parse_err(ln3 + 1, format!("unknown node id {id}")))?;
                    }
                    tets.push(t);
                }
                skip_until(&mut lines, "$EndElements");
            }
            _ => {} // unknown sections are skipped line by line
        }
    }
    if !saw_format {
        return Err(parse_err(1, "missing $MeshFormat section"));
    }
    Ok((nodes, tets))
}

fn skip_until<'a>(
    lines: &mut std::iter::Peekable<impl Iterator<Item = (usize, &'a str)>>,
    end: &str,
) {
    for (_, line) in lines.by_ref() {
        if line.trim() == end {
            break;
        }
    }
}

/// Parses the plain `.tet` format:
/// a header `tet <n_nodes> <n_tets>`, then `n_nodes` lines of `x y z`
/// (meters), then `n_tets` lines of `i0 i1 i2 i3` (0-based indices).
pub fn parse_tet_ascii(text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 4]>), MeshError> {
    let mut lines = text.lines().enumerate();
    let (ln, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty .tet file"))?;
    let mut it = header.split_whitespace();
    if it.next() != Some("tet") {
        return Err(parse_err(ln + 1, "expected header `tet <n_nodes> <n_tets>`"));
    }
    let n_nodes: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(ln + 1, "bad node count"))?;
    let n_tets: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(ln + 1, "bad tet count"))?;

    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (ln2, row) = lines
            .next()
            .ok_or_else(|| parse_err(ln + 1, "truncated node list"))?;
        let vals: Vec<f64> = row
            .split_whitespace()
            .map(|s| s.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(ln2 + 1, "bad node coordinates"))?;
        if vals.len() != 3 {
            return Err(parse_err(ln2 + 1, "expected `x y z`"));
        }
        nodes.push(Vec3::new(vals[0], vals[1], vals[2]));
    }
    let mut tets = Vec::with_capacity(n_tets);
    for _ in 0..n_tets {
        let (ln2, row) = lines
            .next()
            .ok_or_else(|| parse_err(ln + 1, "truncated tet list"))?;
        let vals: Vec<usize> = row
            .split_whitespace()
            .map(|s| s.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| parse_err(ln2 + 1, "bad tet indices"))?;
        if vals.len() != 4 {
            return Err(parse_err(ln2 + 1, "expected `i0 i1 i2 i3`"));
        }
        tets.push([vals[0], vals[1], vals[2], vals[3]]);
    }
    Ok((nodes, tets))
}

/// Serializes nodes and tets in the plain `.tet` format.
pub fn write_tet_ascii(nodes: &[Vec3], tets: &[[usize; 4]]) -> String {
    let mut out = String::new();
    out.push_str(&format!("tet {} {}\n", nodes.len(), tets.len()));
    for p in nodes {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    for t in tets {
        out.push_str(&format!("{} {} {} {}\n", t[0], t[1], t[2], t[3]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const GMSH_SINGLE_TET: &str = "\
$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
5 0 0 1
$EndNodes
$Elements
3
1 15 2 0 1 1
2 2 2 0 1 1 2 3
3 4 2 0 1 1 2 3 5
$EndElements
";

    #[test]
    fn gmsh_reads_only_tets() {
        let (nodes, tets) = parse_gmsh_v2(GMSH_SINGLE_TET).unwrap();
        assert_eq!(nodes.len(), 4);
        assert_eq!(tets, vec![[0, 1, 2, 3]]);
        // non-contiguous id 5 mapped by file order
        assert_eq!(nodes[3], Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn gmsh_rejects_binary() {
        let text = "$MeshFormat\n2.2 1 8\n$EndMeshFormat\n";
        assert!(parse_gmsh_v2(text).is_err());
    }

    #[test]
    fn tet_roundtrip() {
        let nodes = vec![
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let tets = vec![[0usize, 1, 2, 3]];
        let text = write_tet_ascii(&nodes, &tets);
        let (n2, t2) = parse_tet_ascii(&text).unwrap();
        assert_eq!(n2, nodes);
        assert_eq!(t2, tets);
    }

    #[test]
    fn tet_bad_header() {
        assert!(parse_tet_ascii("nodes 4 1\n").is_err());
    }
}
