//! Flat binary tensor files for numeric fixtures: a little-endian u32 rank,
//! u32 dims, then the f32 payload row-major. Dumb on purpose so any
//! language can read the fixtures back.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use streamsim_core::kernels::{attention_full, attention_streaming};
use streamsim_core::kernels::{conv3d_full, Conv3d};
use streamsim_core::kernels::rope_apply;
use streamsim_core::kernels::Tensor;
use streamsim_core::rng::SplitMix64;

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("{path:?}"))?);
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("{path:?}"))?);
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let ndim = u32::from_le_bytes(u32buf) as usize;
    if ndim == 0 || ndim > 8 {
        bail!("implausible rank {ndim} in {path:?}");
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        r.read_exact(&mut u32buf)?;
        shape.push(u32::from_le_bytes(u32buf) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    for _ in 0..numel {
        r.read_exact(&mut u32buf)?;
        data.push(f32::from_le_bytes(u32buf));
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        bail!("trailing bytes in {path:?}");
    }
    Tensor::new(shape, data).map_err(|e| anyhow::anyhow!("{e:?}"))
}

/// Write seeded oracle fixtures for the three reference kernels. Returns
/// the paths written.
pub fn gen_fixtures(out_dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut rng = SplitMix64::new(seed);
    let mut written = Vec::new();
    let mut emit = |name: &str, t: &Tensor| -> Result<()> {
        let path = out_dir.join(name);
        write_tensor(&path, t)?;
        written.push(path);
        Ok(())
    };

    // Rotary embedding: [seq, dim] input, positions 0..seq, rotated output.
    let seq = 16;
    let dim = 8;
    let rope_in = Tensor::random(vec![seq, dim], &mut rng, 1.0).unwrap();
    let positions: Vec<u64> = (0..seq as u64).collect();
    let mut rope_out = rope_in.clone();
    rope_apply(&mut rope_out, &positions, 10000.0).unwrap();
    let pos_t = Tensor::new(vec![seq], positions.iter().map(|&p| p as f32).collect()).unwrap();
    emit("rope_input.bin", &rope_in)?;
    emit("rope_positions.bin", &pos_t)?;
    emit("rope_output.bin", &rope_out)?;

    // Causal attention with sink tokens and a rolling window.
    let q = Tensor::random(vec![seq, dim], &mut rng, 1.0).unwrap();
    let k = Tensor::random(vec![seq, dim], &mut rng, 1.0).unwrap();
    let v = Tensor::random(vec![seq, dim], &mut rng, 1.0).unwrap();
    let scale = 1.0 / (dim as f64).sqrt();
    let full = attention_full(&q, &k, &v, scale).unwrap();
    let streaming = attention_streaming(&q, &k, &v, 2, 6, scale).unwrap();
    emit("attn_q.bin", &q)?;
    emit("attn_k.bin", &k)?;
    emit("attn_v.bin", &v)?;
    emit("attn_full.bin", &full)?;
    emit("attn_streaming_s2_w6.bin", &streaming)?;

    // Causal space-time convolution.
    let conv = Conv3d::random(3, 2, 3, 3, 3, &mut rng).unwrap();
    let input = Tensor::random(vec![6, 3, 5, 5], &mut rng, 1.0).unwrap();
    let output = conv3d_full(&conv, &input).unwrap();
    emit("conv_weight.bin", conv.weight())?;
    emit("conv_input.bin", &input)?;
    emit("conv_output.bin", &output)?;

    Ok(written)
}
