//! Run artifacts: CSV series, binary field snapshots, and plain-text
//! reports. All writers go through [`atomic_write`] so a crash mid-write
//! never leaves a truncated file behind.
//!
//! Floating-point values in text outputs use 17 significant digits, enough
//! to round-trip an `f64` exactly; repeated runs of a deterministic scenario
//! therefore produce byte-identical files.

use crate::assembly::QPTensorField;
use crate::scenario::VariantKind;
use crate::tensor::SymTensor;
use crate::{Error, Result};
use std::fs;
use std::io::Write as _;
use std::path::Path;

const FIELDS_MAGIC: &[u8; 4] = b"TVFD";
const FIELDS_VERSION: u32 = 1;

/// Write `bytes` to `path` via a temporary file in the same directory,
/// renamed into place once complete.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(parent)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("not a file path: {}", path.display()),
        )))?
        .to_owned();
    let mut tmp_name = file_name.clone();
    tmp_name.push(format!(".tmp-{}", std::process::id()));
    let tmp_path = parent.join(&tmp_name);
    {
        let mut f = fs::File::create(&tmp_path)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp_path, path)?;
    Ok(())
}

/// One row of the energy series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub t: f64,
    pub potential: f64,
    pub thermal: f64,
    /// Accumulated dissipation ∫₀ᵗ ∫ T^d:G dx dτ.
    pub dissipation: f64,
    /// Accumulated external power.
    pub power: f64,
    /// Balance residual R(t).
    pub residual: f64,
}

/// `energy.csv`: header plus one row per sample, full-precision.
pub fn write_energy_csv(path: &Path, rows: &[EnergyRow]) -> Result<()> {
    let mut out = String::from("t,E,H,dissipation,power,residual\n");
    for r in rows {
        out.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            r.t, r.potential, r.thermal, r.dissipation, r.power, r.residual
        ));
    }
    atomic_write(path, out.as_bytes())
}

/// `bounds.csv`: named scalar monitors, one per row.
pub fn write_bounds_csv(path: &Path, entries: &[(String, f64)]) -> Result<()> {
    let mut out = String::from("quantity,value\n");
    for (name, value) in entries {
        out.push_str(&format!("{name},{value:.17e}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// Generic numeric table with a caller-supplied header line.
pub fn write_table_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// `report.txt`: `key = value` lines in the given order.
pub fn write_report(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut out = String::new();
    for (key, value) in entries {
        out.push_str(&format!("{key} = {value}\n"));
    }
    atomic_write(path, out.as_bytes())
}

pub fn variant_tag(kind: VariantKind) -> u8 {
    match kind {
        VariantKind::Symmetric => 0,
        VariantKind::Broken => 1,
        VariantKind::Nonlinear => 2,
    }
}

pub fn variant_from_tag(tag: u8) -> Result<VariantKind> {
    match tag {
        0 => Ok(VariantKind::Symmetric),
        1 => Ok(VariantKind::Broken),
        2 => Ok(VariantKind::Nonlinear),
        other => Err(Error::Format(format!("unknown variant tag {other}"))),
    }
}

/// Header of a binary field snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldsHeader {
    pub mesh_hash: u64,
    pub k: u32,
    pub l: u32,
    pub l_complement: u32,
    pub variant: VariantKind,
    pub t: f64,
    pub qp_count: u64,
}

/// A decoded field snapshot.
pub struct FieldsFile {
    pub header: FieldsHeader,
    pub eps_p: QPTensorField,
    pub stress: QPTensorField,
    pub stress_dev: QPTensorField,
    pub sigma: QPTensorField,
}

fn push_tensor(buf: &mut Vec<u8>, t: &SymTensor) {
    for v in [t.xx, t.yy, t.zz, t.yz, t.xz, t.xy] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_f64(bytes: &[u8], pos: &mut usize) -> Result<f64> {
    let end = *pos + 8;
    let slice = bytes
        .get(*pos..end)
        .ok_or_else(|| Error::Format("field snapshot truncated".into()))?;
    *pos = end;
    Ok(f64::from_le_bytes(slice.try_into().unwrap()))
}

fn read_tensor(bytes: &[u8], pos: &mut usize) -> Result<SymTensor> {
    let mut c = [0.0; 6];
    for v in c.iter_mut() {
        *v = read_f64(bytes, pos)?;
    }
    Ok(SymTensor::new(c[0], c[1], c[2], c[3], c[4], c[5]))
}

/// Encode the per-quadrature-point tensor fields at one time into the
/// little-endian snapshot format:
///
/// ```text
///   magic "TVFD" | version u32 | mesh hash u64 | k u32 | l u32 |
///   l_complement u32 | variant tag u8 | 7 pad bytes | t f64 |
///   qp count u64 | per qp: ε^p, T, T^d, σ as 6 f64 each
/// ```
pub fn write_fields_bin(
    path: &Path,
    header: &FieldsHeader,
    eps_p: &QPTensorField,
    stress: &QPTensorField,
    stress_dev: &QPTensorField,
    sigma: &QPTensorField,
) -> Result<()> {
    let nqp = header.qp_count as usize;
    for (name, f) in [
        ("eps_p", eps_p),
        ("stress", stress),
        ("stress_dev", stress_dev),
        ("sigma", sigma),
    ] {
        if f.len() != nqp {
            return Err(Error::DimensionMismatch(format!(
                "{name} has {} points, header says {nqp}",
                f.len()
            )));
        }
    }
    let mut buf = Vec::with_capacity(48 + nqp * 24 * 8);
    buf.extend_from_slice(FIELDS_MAGIC);
    buf.extend_from_slice(&FIELDS_VERSION.to_le_bytes());
    buf.extend_from_slice(&header.mesh_hash.to_le_bytes());
    buf.extend_from_slice(&header.k.to_le_bytes());
    buf.extend_from_slice(&header.l.to_le_bytes());
    buf.extend_from_slice(&header.l_complement.to_le_bytes());
    buf.push(variant_tag(header.variant));
    buf.extend_from_slice(&[0u8; 7]);
    buf.extend_from_slice(&header.t.to_le_bytes());
    buf.extend_from_slice(&header.qp_count.to_le_bytes());
    for q in 0..nqp {
        push_tensor(&mut buf, &eps_p.data[q]);
        push_tensor(&mut buf, &stress.data[q]);
        push_tensor(&mut buf, &stress_dev.data[q]);
        push_tensor(&mut buf, &sigma.data[q]);
    }
    atomic_write(path, &buf)
}

/// Decode a snapshot written by [`write_fields_bin`].
pub fn read_fields_bin(path: &Path) -> Result<FieldsFile> {
    let bytes = fs::read(path)?;
    if bytes.len() < 48 {
        return Err(Error::Format("field snapshot too short".into()));
    }
    if &bytes[0..4] != FIELDS_MAGIC {
        return Err(Error::Format("bad field-snapshot magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FIELDS_VERSION {
        return Err(Error::Format(format!(
            "unsupported field-snapshot version {version}"
        )));
    }
    let mesh_hash = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let k = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let l = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
    let l_complement = u32::from_le_bytes(bytes[24..28].try_into().unwrap());
    let variant = variant_from_tag(bytes[28])?;
    let mut pos = 36;
    let t = read_f64(&bytes, &mut pos)?;
    let qp_count = u64::from_le_bytes(
        bytes
            .get(pos..pos + 8)
            .ok_or_else(|| Error::Format("field snapshot truncated".into()))?
            .try_into()
            .unwrap(),
    );
    pos += 8;
    let nqp = qp_count as usize;
    let expected = pos + nqp * 24 * 8;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "field snapshot length {} but header implies {expected}",
            bytes.len()
        )));
    }
    let mut eps_p = QPTensorField::zeros(nqp);
    let mut stress = QPTensorField::zeros(nqp);
    let mut stress_dev = QPTensorField::zeros(nqp);
    let mut sigma = QPTensorField::zeros(nqp);
    for q in 0..nqp {
        eps_p.data[q] = read_tensor(&bytes, &mut pos)?;
        stress.data[q] = read_tensor(&bytes, &mut pos)?;
        stress_dev.data[q] = read_tensor(&bytes, &mut pos)?;
        sigma.data[q] = read_tensor(&bytes, &mut pos)?;
    }
    Ok(FieldsFile {
        header: FieldsHeader {
            mesh_hash,
            k,
            l,
            l_complement,
            variant,
            t,
            qp_count,
        },
        eps_p,
        stress,
        stress_dev,
        sigma,
    })
}

/// File name for the snapshot at time `t`, with enough digits to keep
/// distinct requested times distinct.
pub fn fields_file_name(t: f64) -> String {
    format!("fields_{t:.6}.bin")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().expect("tempdir")
    }

    #[test]
    fn atomic_write_creates_and_replaces() {
        let dir = tmpdir();
        let path = dir.path().join("a.txt");
        atomic_write(&path, b"first").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"first");
        atomic_write(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        // No stray temp files remain.
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().contains(".tmp-"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn energy_csv_round_trips_doubles_exactly() {
        let dir = tmpdir();
        let path = dir.path().join("energy.csv");
        let rows = vec![EnergyRow {
            t: 0.1,
            potential: 1.0 / 3.0,
            thermal: -2.0e-17,
            dissipation: 7.25,
            power: 0.0,
            residual: f64::MIN_POSITIVE,
        }];
        write_energy_csv(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,E,H,dissipation,power,residual");
        let cells: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|c| c.parse().unwrap())
            .collect();
        assert_eq!(cells[0], 0.1);
        assert_eq!(cells[1], 1.0 / 3.0);
        assert_eq!(cells[2], -2.0e-17);
        assert_eq!(cells[5], f64::MIN_POSITIVE);
    }

    #[test]
    fn identical_rows_give_identical_bytes() {
        let dir = tmpdir();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let rows = vec![
            EnergyRow {
                t: 0.0,
                potential: 0.123456789123456789,
                thermal: 9.87e-5,
                dissipation: 1.0,
                power: -3.5,
                residual: 1e-300,
            };
            4
        ];
        write_energy_csv(&a, &rows).unwrap();
        write_energy_csv(&b, &rows).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn fields_bin_round_trip() {
        let dir = tmpdir();
        let path = dir.path().join(fields_file_name(0.25));
        let nqp = 17;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut make = || {
            let mut f = QPTensorField::zeros(nqp);
            for t in f.data.iter_mut() {
                *t = SymTensor::new(
                    rng.gen::<f64>(),
                    rng.gen::<f64>(),
                    rng.gen::<f64>(),
                    rng.gen::<f64>(),
                    rng.gen::<f64>(),
                    rng.gen::<f64>(),
                );
            }
            f
        };
        let (eps_p, stress, stress_dev, sigma) = (make(), make(), make(), make());
        let header = FieldsHeader {
            mesh_hash: 0xDEAD_BEEF_1234_5678,
            k: 8,
            l: 8,
            l_complement: 8,
            variant: VariantKind::Broken,
            t: 0.25,
            qp_count: nqp as u64,
        };
        write_fields_bin(&path, &header, &eps_p, &stress, &stress_dev, &sigma).unwrap();
        let decoded = read_fields_bin(&path).unwrap();
        assert_eq!(decoded.header, header);
        for q in 0..nqp {
            assert_eq!(decoded.eps_p.data[q], eps_p.data[q]);
            assert_eq!(decoded.stress.data[q], stress.data[q]);
            assert_eq!(decoded.stress_dev.data[q], stress_dev.data[q]);
            assert_eq!(decoded.sigma.data[q], sigma.data[q]);
        }
    }

    #[test]
    fn fields_bin_rejects_corruption() {
        let dir = tmpdir();
        let path = dir.path().join("f.bin");
        let nqp = 3;
        let f = QPTensorField::zeros(nqp);
        let header = FieldsHeader {
            mesh_hash: 1,
            k: 1,
            l: 1,
            l_complement: 0,
            variant: VariantKind::Symmetric,
            t: 0.0,
            qp_count: nqp as u64,
        };
        write_fields_bin(&path, &header, &f, &f, &f, &f).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 5);
        fs::write(&path, &bytes).unwrap();
        assert!(read_fields_bin(&path).is_err());
        let mut bad_magic = fs::read(&path).unwrap_or_default();
        if bad_magic.len() >= 4 {
            bad_magic[0] = b'X';
            fs::write(&path, &bad_magic).unwrap();
            assert!(read_fields_bin(&path).is_err());
        }
    }

    #[test]
    fn report_is_plain_key_value_lines() {
        let dir = tmpdir();
        let path = dir.path().join("report.txt");
        write_report(
            &path,
            &[
                ("variant".into(), "symmetric".into()),
                ("k".into(), "8".into()),
                ("max_alpha_gamma_gap".into(), format!("{:.17e}", 1e-15)),
            ],
        )
        .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "variant = symmetric");
        assert_eq!(lines[1], "k = 8");
        assert!(lines[2].starts_with("max_alpha_gamma_gap = 1.0"));
    }

    #[test]
    fn bounds_csv_layout() {
        let dir = tmpdir();
        let path = dir.path().join("bounds.csv");
        write_bounds_csv(
            &path,
            &[("sup_E".to_string(), 0.5), ("sup_theta_l1".to_string(), 2.0)],
        )
        .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("quantity,value\n"));
        assert!(text.contains("sup_E,5.0"));
    }

    #[test]
    fn random_header_tags_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let kind = match rng.gen_range(0..3) {
                0 => VariantKind::Symmetric,
                1 => VariantKind::Broken,
                _ => VariantKind::Nonlinear,
            };
            assert_eq!(variant_from_tag(variant_tag(kind)).unwrap(), kind);
        }
        assert!(variant_from_tag(3).is_err());
    }
}
