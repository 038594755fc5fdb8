//! Versioned binary checkpoints. The layout is documented in `docs/FORMATS.md`.

use std::path::Path;

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::deform::{Decoders, DeformationField, Encoder, HexLevel, HexPlaneField, Linear, Mlp, PositionalMlp};
use crate::error::{Error, Result};
use crate::init::Aabb;
use crate::model::GaussianCloud;
use crate::real::Real;

use super::{AdamGroup, DensifyStats, TrainConfig, Trainer};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SPLF";
pub const CHECKPOINT_VERSION: u32 = 1;

/// First 8 bytes of the SHA-256 of everything that fixes tensor shapes.
pub fn config_hash(config: &TrainConfig, sh_degree: usize) -> [u8; 8] {
    let d = &config.deform;
    let structural = serde_json::json!({
        "encoder": d.encoder,
        "hexplane": {
            "levels": d.hexplane.levels,
            "spatial_res": d.hexplane.spatial_res,
            "time_res": d.hexplane.time_res,
            "channels": d.hexplane.channels,
        },
        "decoder_hidden": d.decoder_hidden,
        "decoder_layers": d.decoder_layers,
        "shared_trunk": d.shared_trunk,
        "pe_frequencies": d.pe_frequencies,
        "pe_layers": d.pe_layers,
        "sh_degree": sh_degree,
    });
    let digest = Sha256::digest(structural.to_string().as_bytes());
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn floats<F: Real>(&mut self, v: &[F]) {
        self.u64(v.len() as u64);
        for x in v {
            self.0.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
    fn linear<F: Real>(&mut self, l: &Linear<F>) {
        self.u32(l.outputs());
        self.u32(l.inputs());
        self.floats(l.weight.as_slice().expect("standard layout"));
        self.floats(l.bias.as_slice().expect("standard layout"));
    }
    fn mlp<F: Real>(&mut self, m: &Mlp<F>) {
        self.u32(m.layers.len());
        for l in &m.layers {
            self.linear(l);
        }
    }
    fn aabb(&mut self, b: &Aabb) {
        for v in b.min.iter().chain(&b.max) {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

fn truncated() -> Error {
    Error::Checkpoint("unexpected end of data".into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.data.len()).ok_or_else(truncated)?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn floats<F: Real>(&mut self, expected: Option<usize>) -> Result<Vec<F>> {
        let n = self.u64()? as usize;
        if expected.is_some_and(|e| e != n) {
            return Err(Error::Checkpoint(format!("array of {n} values where {} were expected", expected.unwrap())));
        }
        let raw = self.take(n.checked_mul(8).ok_or_else(truncated)?)?;
        Ok(raw.chunks_exact(8).map(|c| F::lit(f64::from_le_bytes(c.try_into().unwrap()))).collect())
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()? as usize;
        self.take(n)
    }
    fn linear<F: Real>(&mut self) -> Result<Linear<F>> {
        let (out, inp) = (self.u32()?, self.u32()?);
        let w = self.floats(Some(out * inp))?;
        let b = self.floats(Some(out))?;
        Ok(Linear { weight: Array2::from_shape_vec((out, inp), w).map_err(|e| Error::Checkpoint(e.to_string()))?, bias: Array1::from(b) })
    }
    fn mlp<F: Real>(&mut self) -> Result<Mlp<F>> {
        let n = self.u32()?;
        Ok(Mlp { layers: (0..n).map(|_| self.linear()).collect::<Result<_>>()? })
    }
    fn aabb(&mut self) -> Result<Aabb> {
        let mut v = [0.0; 6];
        for x in &mut v {
            *x = self.f64()?;
        }
        Ok(Aabb::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]))
    }
}

fn encode<F: Real>(t: &Trainer<F>) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION as usize);
    w.0.extend_from_slice(&config_hash(&t.config, t.cloud.sh_degree));
    w.u64(t.iteration as u64);
    w.bytes(serde_json::to_string(&t.config)?.as_bytes());

    let c = &t.cloud;
    w.u64(c.len() as u64);
    w.u32(c.sh_degree);
    w.floats(c.positions.as_flattened());
    w.floats(c.rotations.as_flattened());
    w.floats(c.log_scales.as_flattened());
    w.floats(&c.opacity_logits);
    w.floats(&c.sh_coeffs);

    match &t.field.encoder {
        Encoder::Hexplane(h) => {
            w.u8(0);
            w.aabb(&h.bounds);
            w.u32(h.levels.len());
            for l in &h.levels {
                w.u32(l.spatial_res);
                w.u32(l.time_res);
                w.u32(l.channels);
                for p in l.planes.iter() {
                    w.floats(p);
                }
                for m in l.mix.iter() {
                    w.floats(m);
                }
            }
        }
        Encoder::Mlp(m) => {
            w.u8(1);
            w.aabb(&m.bounds);
            w.u32(m.frequencies);
            w.mlp(&m.net);
        }
    }
    let d = &t.field.decoders;
    match &d.trunk {
        Some(l) => {
            w.u8(1);
            w.linear(l);
        }
        None => w.u8(0),
    }
    for h in &d.heads {
        w.mlp(h);
    }

    w.u32(t.groups.len());
    for g in &t.groups {
        w.bytes(g.name.as_bytes());
        w.u64(g.step);
        w.floats(&g.m);
        w.floats(&g.v);
    }
    let digest = Sha256::digest(&w.0);
    w.0.extend_from_slice(&digest);
    Ok(w.0)
}

/// Writes the trainer state. The file is written next to `path` and renamed
/// into place so a crash never leaves a half-written checkpoint.
pub fn save_checkpoint<F: Real>(trainer: &Trainer<F>, path: &Path) -> Result<()> {
    let bytes = encode(trainer)?;
    let tmp = path.with_extension("partial");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a checkpoint. With `expected`, a checkpoint whose tensor shapes come
/// from a different configuration is rejected.
pub fn load_checkpoint<F: Real>(path: &Path, expected: Option<&TrainConfig>) -> Result<Trainer<F>> {
    let data = std::fs::read(path)?;
    decode(&data, expected)
}

fn decode<F: Real>(data: &[u8], expected: Option<&TrainConfig>) -> Result<Trainer<F>> {
    if data.len() < 4 + 4 + 8 + 32 || &data[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic or too short)".into()));
    }
    let version = u32::from_le_bytes(data[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Incompatible(format!("format version {version}, this build reads {CHECKPOINT_VERSION}")));
    }
    let (body, footer) = data.split_at(data.len() - 32);
    if Sha256::digest(body).as_slice() != footer {
        return Err(Error::Checkpoint("checksum mismatch (truncated or corrupted file)".into()));
    }
    let mut r = Reader { data: body, pos: 8 };
    let hash: [u8; 8] = r.take(8)?.try_into().unwrap();
    let iteration = r.u64()? as usize;
    let config: TrainConfig = serde_json::from_slice(r.bytes()?)?;

    let n = r.u64()? as usize;
    let sh_degree = r.u32()?;
    if sh_degree > 3 {
        return Err(Error::Checkpoint(format!("SH degree {sh_degree}")));
    }
    if config_hash(&config, sh_degree) != hash {
        return Err(Error::Checkpoint("stored configuration does not match its hash".into()));
    }
    if let Some(exp) = expected {
        if config_hash(exp, sh_degree) != hash {
            return Err(Error::Incompatible("checkpoint was written with a different model configuration".into()));
        }
    }
    let mut cloud = GaussianCloud::new(n, sh_degree);
    let b = cloud.coeffs_per_gaussian();
    let to3 = |v: Vec<F>| v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    cloud.positions = to3(r.floats(Some(3 * n))?);
    cloud.rotations = r.floats::<F>(Some(4 * n))?.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
    cloud.log_scales = to3(r.floats(Some(3 * n))?);
    cloud.opacity_logits = r.floats(Some(n))?;
    cloud.sh_coeffs = r.floats(Some(n * b))?;

    let encoder = match r.u8()? {
        0 => {
            let bounds = r.aabb()?;
            let levels = (0..r.u32()?)
                .map(|_| {
                    let (s, t, c) = (r.u32()?, r.u32()?, r.u32()?);
                    let mut planes: [Vec<F>; 6] = Default::default();
                    for (p, &(_, axis_b)) in crate::deform::PLANE_AXES.iter().enumerate() {
                        let len = if axis_b == 3 { s * t * c } else { s * s * c };
                        planes[p] = r.floats(Some(len))?;
                    }
                    let mut mix: [Vec<F>; 3] = Default::default();
                    for m in &mut mix {
                        *m = r.floats(Some(c))?;
                    }
                    Ok(HexLevel { spatial_res: s, time_res: t, channels: c, planes, mix })
                })
                .collect::<Result<Vec<_>>>()?;
            Encoder::Hexplane(HexPlaneField { bounds, levels })
        }
        1 => {
            let bounds = r.aabb()?;
            let frequencies = r.u32()?;
            Encoder::Mlp(PositionalMlp { bounds, frequencies, net: r.mlp()? })
        }
        tag => return Err(Error::Checkpoint(format!("unknown encoder tag {tag}"))),
    };
    let trunk = match r.u8()? {
        0 => None,
        1 => Some(r.linear()?),
        tag => return Err(Error::Checkpoint(format!("bad trunk flag {tag}"))),
    };
    let heads = [r.mlp()?, r.mlp()?, r.mlp()?, r.mlp()?];
    let field = DeformationField { encoder, decoders: Decoders { trunk, heads } };

    let mut trainer = Trainer::from_parts(config, cloud, field)?;
    let groups = r.u32()?;
    if groups != trainer.groups.len() {
        return Err(Error::Checkpoint(format!("{groups} optimizer groups")));
    }
    for g in trainer.groups.iter_mut() {
        let name = String::from_utf8_lossy(r.bytes()?).into_owned();
        if name != g.name {
            return Err(Error::Checkpoint(format!("optimizer group '{name}' where '{}' was expected", g.name)));
        }
        let step = r.u64()?;
        let len = g.len();
        *g = AdamGroup { name, step, m: r.floats(Some(len))?, v: r.floats(Some(len))? };
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after the optimizer state".into()));
    }
    trainer.iteration = iteration;
    trainer.densify_stats = DensifyStats::new(trainer.cloud.len());
    Ok(trainer)
}
