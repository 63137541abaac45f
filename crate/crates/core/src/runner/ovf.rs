//! OVF 2.0 text snapshots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::MeshSpec;
use crate::vec3::Vec3;

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OvfData {
    pub mesh: MeshSpec,
    /// Simulation time from the description line, if present.
    pub t: Option<f64>,
    pub title: String,
    pub values: Vec<Vec3>,
}

/// Renders a vector field on `mesh` as an OVF 2.0 text document.
pub fn ovf_string(mesh: &MeshSpec, m: &[Vec3], t: f64, title: &str) -> String {
    let [dx, dy, dz] = mesh.cell_size_m();
    let mut s = String::with_capacity(64 * m.len() + 1024);
    let _ = writeln!(s, "# OOMMF OVF 2.0");
    let _ = writeln!(s, "#\n# Segment count: 1\n#\n# Begin: Segment\n# Begin: Header\n#");
    let _ = writeln!(s, "# Title: {title}");
    let _ = writeln!(s, "# meshtype: rectangular\n# meshunit: m\n#");
    let _ = writeln!(s, "# xmin: 0\n# ymin: 0\n# zmin: 0");
    let _ = writeln!(s, "# xmax: {}", fmt_num(dx * mesh.nx as f64));
    let _ = writeln!(s, "# ymax: {}", fmt_num(dy * mesh.ny as f64));
    let _ = writeln!(s, "# zmax: {}", fmt_num(dz * mesh.nz as f64));
    let _ = writeln!(s, "#\n# valuedim: 3\n# valuelabels: mx my mz\n# valueunits: 1 1 1\n#");
    let _ = writeln!(s, "# Desc: Total simulation time: {t:e} s\n#");
    let _ = writeln!(s, "# xbase: {}", fmt_num(0.5 * dx));
    let _ = writeln!(s, "# ybase: {}", fmt_num(0.5 * dy));
    let _ = writeln!(s, "# zbase: {}", fmt_num(0.5 * dz));
    let _ = writeln!(s, "# xnodes: {}\n# ynodes: {}\n# znodes: {}", mesh.nx, mesh.ny, mesh.nz);
    let _ = writeln!(s, "# xstepsize: {}", fmt_num(dx));
    let _ = writeln!(s, "# ystepsize: {}", fmt_num(dy));
    let _ = writeln!(s, "# zstepsize: {}", fmt_num(dz));
    let _ = writeln!(s, "# End: Header\n#\n# Begin: Data Text");
    for v in m {
        let _ = writeln!(s, "{} {} {}", fmt_num(v[0]), fmt_num(v[1]), fmt_num(v[2]));
    }
    let _ = writeln!(s, "# End: Data Text\n# End: Segment");
    s
}

pub fn write_snapshot_ovf(path: &Path, mesh: &MeshSpec, m: &[Vec3], t: f64) -> Result<()> {
    if m.len() != mesh.n_cells() {
        return Err(Error::Ovf(format!(
            "{} values for a {}-cell mesh",
            m.len(),
            mesh.n_cells()
        )));
    }
    fs::write(path, ovf_string(mesh, m, t, "m")).map_err(|e| Error::io(path, e))
}

pub fn read_ovf(path: &Path) -> Result<OvfData> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ovf(&text)
}

pub fn parse_ovf(text: &str) -> Result<OvfData> {
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.trim().eq_ignore_ascii_case("# OOMMF OVF 2.0") => {}
        other => return Err(Error::Ovf(format!("bad magic line {other:?}"))),
    }
    let mut nodes = [0usize; 3];
    let mut step = [0.0f64; 3];
    let mut t = None;
    let mut title = String::new();
    let mut valuedim = 3;
    let mut in_data = false;
    let mut values = Vec::new();
    for line in lines {
        let l = line.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(h) = l.strip_prefix('#') {
            let h = h.trim();
            if h.eq_ignore_ascii_case("Begin: Data Text") {
                in_data = true;
                continue;
            }
            if h.eq_ignore_ascii_case("End: Data Text") {
                in_data = false;
                continue;
            }
            if h.starts_with("Begin: Data") {
                return Err(Error::Ovf(format!("unsupported data block `{h}`")));
            }
            let Some((k, v)) = h.split_once(':') else { continue };
            let (k, v) = (k.trim().to_ascii_lowercase(), v.trim());
            let parse_f = |v: &str| v.parse::<f64>().map_err(|_| Error::Ovf(format!("bad number `{v}` for {k}")));
            let parse_u = |v: &str| v.parse::<usize>().map_err(|_| Error::Ovf(format!("bad count `{v}` for {k}")));
            match k.as_str() {
                "xnodes" => nodes[0] = parse_u(v)?,
                "ynodes" => nodes[1] = parse_u(v)?,
                "znodes" => nodes[2] = parse_u(v)?,
                "xstepsize" => step[0] = parse_f(v)?,
                "ystepsize" => step[1] = parse_f(v)?,
                "zstepsize" => step[2] = parse_f(v)?,
                "valuedim" => valuedim = parse_u(v)?,
                "title" => title = v.to_string(),
                "desc" => {
                    if let Some(rest) = v.strip_prefix("Total simulation time:") {
                        let num = rest.trim().trim_end_matches('s').trim();
                        t = Some(num.parse::<f64>().map_err(|_| Error::Ovf(format!("bad time `{rest}`")))?);
                    }
                }
                _ => {}
            }
            continue;
        }
        if !in_data {
            return Err(Error::Ovf(format!("data outside the data block: `{l}`")));
        }
        if valuedim != 3 {
            return Err(Error::Ovf(format!("valuedim {valuedim} not supported")));
        }
        let mut it = l.split_whitespace().map(|s| s.parse::<f64>());
        let mut v = [0.0; 3];
        for c in &mut v {
            *c = it
                .next()
                .and_then(|r| r.ok())
                .ok_or_else(|| Error::Ovf(format!("malformed data row `{l}`")))?;
        }
        if it.next().is_some() {
            return Err(Error::Ovf(format!("too many values in `{l}`")));
        }
        values.push(v);
    }
    let mesh = MeshSpec::new(
        nodes[0],
        nodes[1],
        nodes[2],
        step[0] / 1e-9,
        step[1] / 1e-9,
        step[2] / 1e-9,
    )
    .map_err(|e| Error::Ovf(format!("header: {e}")))?;
    if values.len() != mesh.n_cells() {
        return Err(Error::Ovf(format!(
            "{} data rows for {} cells",
            values.len(),
            mesh.n_cells()
        )));
    }
    Ok(OvfData {
        mesh,
        t,
        title,
        values,
    })
}
