//! Binary serialization of fitted models.
//!
//! Layout: 4-byte magic `MRMD`, a little-endian `u16` format version, then
//! the transform parameters followed by the classifier head. All counts are
//! `u32`, all floating-point payloads are `f64`, everything little-endian.
//! A loader must consume the file exactly; trailing bytes are treated as
//! corruption, not ignored.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::ridge::{AlphaScore, RidgeModel};
use crate::rocket::{KernelGroup, RocketParams, NUM_KERNELS};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"MRMD";
const VERSION: u16 = 1;

/// Guard for count fields so a corrupt file cannot trigger a huge
/// allocation before the length check fails.
const MAX_COUNT: u32 = 100_000_000;

fn read_count<R: Read>(r: &mut R, what: &str) -> Result<usize> {
    let v = r.read_u32::<LittleEndian>()?;
    if v > MAX_COUNT {
        return Err(Error::ModelFormat(format!(
            "implausible {what} count {v}"
        )));
    }
    Ok(v as usize)
}

fn read_f64_vec<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0f64; n];
    r.read_f64_into::<LittleEndian>(&mut out)?;
    Ok(out)
}

/// Write a fitted model to disk.
pub fn save_model<P: AsRef<Path>>(model: &RidgeModel, path: P) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;

    let r = &model.rocket;
    w.write_u32::<LittleEndian>(r.input_len as u32)?;
    w.write_u32::<LittleEndian>(r.num_channels as u32)?;
    w.write_u64::<LittleEndian>(r.seed)?;
    w.write_u32::<LittleEndian>(r.dilations.len() as u32)?;
    for (i, &d) in r.dilations.iter().enumerate() {
        w.write_u32::<LittleEndian>(d)?;
        w.write_u32::<LittleEndian>(r.features_per_dilation[i] as u32)?;
    }
    w.write_u32::<LittleEndian>(r.groups.len() as u32)?;
    for g in &r.groups {
        w.write_u8(g.kernel)?;
        w.write_u32::<LittleEndian>(g.dilation)?;
        w.write_u8(g.padding as u8)?;
        w.write_u16::<LittleEndian>(g.channels.len() as u16)?;
        for &c in &g.channels {
            w.write_u16::<LittleEndian>(c)?;
        }
    }
    w.write_u32::<LittleEndian>(r.biases.len() as u32)?;
    for &b in &r.biases {
        w.write_f64::<LittleEndian>(b)?;
    }

    let p = model.num_features();
    let k = model.intercepts.len();
    w.write_u32::<LittleEndian>(p as u32)?;
    w.write_u32::<LittleEndian>(k as u32)?;
    for &v in &model.feature_mean {
        w.write_f64::<LittleEndian>(v)?;
    }
    for &v in &model.feature_std {
        w.write_f64::<LittleEndian>(v)?;
    }
    for &v in model.weights.iter() {
        w.write_f64::<LittleEndian>(v)?;
    }
    for &v in &model.intercepts {
        w.write_f64::<LittleEndian>(v)?;
    }
    w.write_f64::<LittleEndian>(model.alpha)?;
    w.write_u32::<LittleEndian>(model.alpha_path.len() as u32)?;
    for s in &model.alpha_path {
        w.write_f64::<LittleEndian>(s.alpha)?;
        w.write_f64::<LittleEndian>(s.loo_mse)?;
    }
    match &model.class_names {
        None => w.write_u32::<LittleEndian>(0)?,
        Some(names) => {
            w.write_u32::<LittleEndian>(names.len() as u32)?;
            for n in names {
                let bytes = n.as_bytes();
                w.write_u32::<LittleEndian>(bytes.len() as u32)?;
                w.write_all(bytes)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a model, validating structure and internal consistency.
pub fn load_model<P: AsRef<Path>>(path: P) -> Result<RidgeModel> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::ModelFormat(format!(
            "bad magic {:02x?}, not a model file",
            magic
        )));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {version} (supported: {VERSION})"
        )));
    }

    let input_len = read_count(&mut r, "input_len")?;
    let num_channels = read_count(&mut r, "num_channels")?;
    let seed = r.read_u64::<LittleEndian>()?;
    let n_dil = read_count(&mut r, "dilation")?;
    let mut dilations = Vec::with_capacity(n_dil);
    let mut features_per_dilation = Vec::with_capacity(n_dil);
    for _ in 0..n_dil {
        dilations.push(r.read_u32::<LittleEndian>()?);
        features_per_dilation.push(read_count(&mut r, "features_per_dilation")?);
    }
    let n_groups = read_count(&mut r, "group")?;
    if n_groups != n_dil * NUM_KERNELS {
        return Err(Error::ModelFormat(format!(
            "{n_groups} groups inconsistent with {n_dil} dilations"
        )));
    }
    let mut groups = Vec::with_capacity(n_groups);
    for _ in 0..n_groups {
        let kernel = r.read_u8()?;
        if kernel as usize >= NUM_KERNELS {
            return Err(Error::ModelFormat(format!("kernel index {kernel} out of range")));
        }
        let dilation = r.read_u32::<LittleEndian>()?;
        if dilation == 0 {
            return Err(Error::ModelFormat("zero dilation".into()));
        }
        let padding = match r.read_u8()? {
            0 => false,
            1 => true,
            other => {
                return Err(Error::ModelFormat(format!("bad padding byte {other}")));
            }
        };
        let n_ch = r.read_u16::<LittleEndian>()? as usize;
        let mut channels = Vec::with_capacity(n_ch);
        for _ in 0..n_ch {
            let c = r.read_u16::<LittleEndian>()?;
            if c as usize >= num_channels {
                return Err(Error::ModelFormat(format!("channel {c} out of range")));
            }
            channels.push(c);
        }
        groups.push(KernelGroup {
            kernel,
            dilation,
            padding,
            channels,
        });
    }
    let n_feat = read_count(&mut r, "bias")?;
    let expected = NUM_KERNELS * features_per_dilation.iter().sum::<usize>();
    if n_feat != expected {
        return Err(Error::ModelFormat(format!(
            "{n_feat} biases inconsistent with feature plan ({expected})"
        )));
    }
    let biases = read_f64_vec(&mut r, n_feat)?;
    let rocket = RocketParams {
        input_len,
        num_channels,
        dilations,
        features_per_dilation,
        groups,
        biases,
        seed,
    };

    let p = read_count(&mut r, "weight row")?;
    if p != n_feat {
        return Err(Error::ModelFormat(format!(
            "classifier expects {p} features, transform produces {n_feat}"
        )));
    }
    let k = read_count(&mut r, "class")?;
    if k == 0 || k > 1024 {
        return Err(Error::ModelFormat(format!("implausible class count {k}")));
    }
    let feature_mean = read_f64_vec(&mut r, p)?;
    let feature_std = read_f64_vec(&mut r, p)?;
    if feature_std.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
        return Err(Error::ModelFormat("non-positive feature scale".into()));
    }
    let flat = read_f64_vec(&mut r, p * k)?;
    let weights = Array2::from_shape_vec((p, k), flat).expect("length just checked");
    let intercepts = read_f64_vec(&mut r, k)?;
    let alpha = r.read_f64::<LittleEndian>()?;
    let n_path = read_count(&mut r, "alpha path")?;
    let mut alpha_path = Vec::with_capacity(n_path);
    for _ in 0..n_path {
        let a = r.read_f64::<LittleEndian>()?;
        let mse = r.read_f64::<LittleEndian>()?;
        alpha_path.push(AlphaScore { alpha: a, loo_mse: mse });
    }
    let n_names = read_count(&mut r, "class name")?;
    let class_names = if n_names == 0 {
        None
    } else {
        let mut names = Vec::with_capacity(n_names);
        for _ in 0..n_names {
            let len = read_count(&mut r, "name byte")?;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            names.push(String::from_utf8(buf).map_err(|_| {
                Error::ModelFormat("class name is not valid UTF-8".into())
            })?);
        }
        Some(names)
    };

    // The file must end exactly here.
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => {}
        _ => {
            return Err(Error::ModelFormat(
                "trailing bytes after model payload".into(),
            ))
        }
    }

    Ok(RidgeModel {
        rocket,
        feature_mean,
        feature_std,
        weights,
        intercepts,
        alpha,
        alpha_path,
        class_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ridge::fit_ridge;
    use crate::rocket;
    use crate::signal::MotionWindow;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model() -> RidgeModel {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let windows: Vec<MotionWindow> = (0..12)
            .map(|i| {
                let data = Array2::from_shape_fn((4, 32), |_| rng.gen::<f64>() - 0.5);
                MotionWindow::new(data, i as f64 * 100.0).unwrap()
            })
            .collect();
        let labels: Vec<i32> = (0..12).map(|i| (i % 3) as i32).collect();
        let params = rocket::RocketParams::fit(&windows, 168, 5).unwrap();
        let x = rocket::transform_batch(&params, &windows).unwrap();
        let mut m = fit_ridge(&x, &labels, &[0.1, 1.0], params).unwrap();
        m.class_names = Some((0..7).map(|i| format!("class{i}")).collect());
        m
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mrmd");
        let model = small_model();
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.mrmd");
        std::fs::write(&path, b"NOPE rest of file").unwrap();
        match load_model(&path) {
            Err(Error::ModelFormat(msg)) => assert!(msg.contains("magic"), "{msg}"),
            other => panic!("expected ModelFormat, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v9.mrmd");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&9u16.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        match load_model(&path) {
            Err(Error::ModelFormat(msg)) => assert!(msg.contains("version"), "{msg}"),
            other => panic!("expected ModelFormat, got {other:?}"),
        }
    }

    #[test]
    fn rejects_truncation_and_trailing_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mrmd");
        let model = small_model();
        save_model(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let cut = dir.path().join("cut.mrmd");
        std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
        assert!(load_model(&cut).is_err());

        let fat = dir.path().join("fat.mrmd");
        let mut extended = bytes.clone();
        extended.extend_from_slice(&[0u8; 3]);
        std::fs::write(&fat, &extended).unwrap();
        match load_model(&fat) {
            Err(Error::ModelFormat(msg)) => assert!(msg.contains("trailing"), "{msg}"),
            other => panic!("expected trailing-bytes error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_implausible_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("huge.mrmd");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&96u32.to_le_bytes()); // input_len
        bytes.extend_from_slice(&24u32.to_le_bytes()); // channels
        bytes.extend_from_slice(&0u64.to_le_bytes()); // seed
        bytes.extend_from_slice(&u32::MAX.to_le_bytes()); // dilation count
        std::fs::write(&path, &bytes).unwrap();
        match load_model(&path) {
            Err(Error::ModelFormat(msg)) => assert!(msg.contains("implausible"), "{msg}"),
            other => panic!("expected ModelFormat, got {other:?}"),
        }
    }

    #[test]
    fn loaded_model_predicts_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mrmd");
        let model = small_model();
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let w = MotionWindow::new(
            Array2::from_shape_fn((4, 32), |_| rng.gen::<f64>() - 0.5),
            0.0,
        )
        .unwrap();
        let f = rocket::transform(&model.rocket, &w).unwrap();
        let f2 = rocket::transform(&back.rocket, &w).unwrap();
        assert_eq!(f, f2);
        assert_eq!(model.predict(&f).unwrap(), back.predict(&f2).unwrap());
    }
}
