//! Dataset container: a directory holding `manifest.json` (shape metadata,
//! seeds, problem definition, format version) and `data.bin` (little-endian
//! 8-byte floats, row-major, arrays concatenated in manifest order).

use super::{Dataset, DatasetMeta, TrainError};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ArrayDecl {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    #[serde(flatten)]
    meta: DatasetMeta,
    arrays: Vec<ArrayDecl>,
}

fn rows_to_bytes(rows: &[Vec<f64>], out: &mut Vec<u8>) {
    for row in rows {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Write `manifest.json` and `data.bin` into `dir` (created if missing).
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<(), TrainError> {
    fs::create_dir_all(dir)?;
    let arrays = vec![
        ArrayDecl {
            name: "params".into(),
            rows: ds.params.len(),
            cols: ds.meta.p,
        },
        ArrayDecl {
            name: "snapshots".into(),
            rows: ds.snapshots.len(),
            cols: ds.meta.n_h,
        },
        ArrayDecl {
            name: "latents".into(),
            rows: ds.latents.len(),
            cols: ds.meta.m_tilde,
        },
    ];
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        meta: ds.meta.clone(),
        arrays,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), json)?;

    let total = ds.params.len() * ds.meta.p
        + ds.snapshots.len() * ds.meta.n_h
        + ds.latents.len() * ds.meta.m_tilde;
    let mut bytes = Vec::with_capacity(total * 8);
    rows_to_bytes(&ds.params, &mut bytes);
    rows_to_bytes(&ds.snapshots, &mut bytes);
    rows_to_bytes(&ds.latents, &mut bytes);
    fs::write(dir.join("data.bin"), bytes)?;
    Ok(())
}

fn take_rows(
    data: &[f64],
    offset: &mut usize,
    rows: usize,
    cols: usize,
) -> Result<Vec<Vec<f64>>, TrainError> {
    let need = rows * cols;
    if *offset + need > data.len() {
        return Err(TrainError::BadContainer(format!(
            "data.bin too short: need {} floats at offset {}",
            need, *offset
        )));
    }
    let out = data[*offset..*offset + need]
        .chunks_exact(cols)
        .map(|c| c.to_vec())
        .collect();
    *offset += need;
    Ok(out)
}

/// Read a dataset container back, validating shapes against the manifest.
pub fn read_dataset(dir: &Path) -> Result<Dataset, TrainError> {
    let manifest_text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: Manifest = serde_json::from_str(&manifest_text)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(TrainError::BadContainer(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let bytes = fs::read(dir.join("data.bin"))?;
    if bytes.len() % 8 != 0 {
        return Err(TrainError::BadContainer(
            "data.bin length is not a multiple of 8".into(),
        ));
    }
    let floats: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut offset = 0;
    let mut params = Vec::new();
    let mut snapshots = Vec::new();
    let mut latents = Vec::new();
    for decl in &manifest.arrays {
        let rows = take_rows(&floats, &mut offset, decl.rows, decl.cols)?;
        match decl.name.as_str() {
            "params" => params = rows,
            "snapshots" => snapshots = rows,
            "latents" => latents = rows,
            other => return Err(TrainError::BadContainer(format!("unknown array {other:?}"))),
        }
    }
    if offset != floats.len() {
        return Err(TrainError::BadContainer(format!(
            "data.bin has {} trailing floats",
            floats.len() - offset
        )));
    }
    let meta = manifest.meta;
    if params.len() != meta.n || snapshots.len() != meta.n || latents.len() != meta.n {
        return Err(TrainError::BadContainer(
            "row counts disagree with manifest n".into(),
        ));
    }
    Ok(Dataset {
        params,
        snapshots,
        latents,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{make_dataset, LatentEncoder};
    use super::*;
    use crate::fom::{Coefficient, DiffusionProblem, Grid};

    fn sample_dataset() -> Dataset {
        let problem = DiffusionProblem {
            a0: Coefficient::Constant { value: 2.0 },
            psis: vec![Coefficient::Sine {
                amplitude: 0.3,
                mode: 1,
            }],
            forcing: Coefficient::Constant { value: 1.0 },
            r: 1.0,
            xi: 0.2,
            gamma: 0.5,
            eps: 0.5,
        };
        make_dataset(
            &problem,
            Grid::new(4).unwrap(),
            1,
            2,
            5,
            77,
            "train",
            LatentEncoder::Quadrature,
        )
        .unwrap()
    }

    #[test]
    fn container_round_trip_is_bit_exact() {
        let ds = sample_dataset();
        let dir = std::env::temp_dir().join(format!("dlrom-container-{}", std::process::id()));
        write_dataset(&dir, &ds).unwrap();
        let back = read_dataset(&dir).unwrap();
        assert_eq!(ds, back);

        // Writing again produces byte-identical files.
        let first_manifest = fs::read(dir.join("manifest.json")).unwrap();
        let first_data = fs::read(dir.join("data.bin")).unwrap();
        write_dataset(&dir, &ds).unwrap();
        assert_eq!(first_manifest, fs::read(dir.join("manifest.json")).unwrap());
        assert_eq!(first_data, fs::read(dir.join("data.bin")).unwrap());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let ds = sample_dataset();
        let dir = std::env::temp_dir().join(format!("dlrom-trunc-{}", std::process::id()));
        write_dataset(&dir, &ds).unwrap();
        let bytes = fs::read(dir.join("data.bin")).unwrap();
        fs::write(dir.join("data.bin"), &bytes[..bytes.len() - 16]).unwrap();
        assert!(matches!(
            read_dataset(&dir),
            Err(TrainError::BadContainer(_))
        ));
        fs::remove_dir_all(&dir).unwrap();
    }
}
