//! Versioned binary checkpoints: a JSON header describing the run followed
//! by raw little-endian f64 array payloads in header order. Saving, loading
//! and saving again yields byte-identical files.

use std::io::{Read, Write};
use std::path::Path;

use crate::arch::ModelArch;
use crate::array::DenseArray;
use crate::energy::gibbs::GibbsState;
use crate::error::{Error, Result};
use crate::objectives::BernoulliMixture;
use crate::rng::Prng;
use crate::trainer::{Method, TrainConfig, TrainState};
use crate::variational::{AuxNet, Decoder, DecoderNet, Encoder, EncoderNet};

const MAGIC: &[u8; 8] = b"ADVILCK1";

#[derive(serde::Serialize, serde::Deserialize)]
struct AdamMeta {
    t: u64,
    skipped: u64,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Header {
    version: u32,
    config_hash: String,
    method: Method,
    arch: ModelArch,
    d_z: Option<usize>,
    nvil_components: Option<usize>,
    energy_offset: f64,
    iteration: u64,
    data_cursor: u64,
    rng: [String; 4],
    adam_theta: AdamMeta,
    adam_phi: AdamMeta,
    adam_psi: AdamMeta,
    pcd_chains: usize,
    arrays: Vec<ArrayEntry>,
}

fn push_array(entries: &mut Vec<ArrayEntry>, payload: &mut Vec<f64>, name: String, a: &DenseArray) {
    entries.push(ArrayEntry {
        name,
        shape: a.shape().to_vec(),
    });
    payload.extend_from_slice(a.values());
}

/// Writes the full training state. `method` determines which containers
/// the loader rebuilds; tabular oracle overrides are not checkpointable.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    state: &TrainState,
    cfg: &TrainConfig,
    config_hash: u64,
) -> Result<()> {
    let mut entries = Vec::new();
    let mut payload = Vec::new();

    for b in state.model.theta_blocks() {
        push_array(
            &mut entries,
            &mut payload,
            format!("param/{}", b.name()),
            &b.value,
        );
    }
    if let Some(enc) = &state.enc {
        let Encoder::Net(net) = enc else {
            return Err(Error::Checkpoint(
                "tabular encoder cannot be checkpointed".into(),
            ));
        };
        for b in net.blocks() {
            push_array(
                &mut entries,
                &mut payload,
                format!("param/{}", b.name()),
                &b.value,
            );
        }
    }
    if let Some(dec) = &state.dec {
        let Decoder::Net(net) = dec else {
            return Err(Error::Checkpoint(
                "tabular decoder cannot be checkpointed".into(),
            ));
        };
        for b in net.blocks() {
            push_array(
                &mut entries,
                &mut payload,
                format!("param/{}", b.name()),
                &b.value,
            );
        }
    }
    if let Some(aux) = &state.aux {
        for b in aux.blocks() {
            push_array(
                &mut entries,
                &mut payload,
                format!("param/{}", b.name()),
                &b.value,
            );
        }
    }
    if let Some(q) = &state.nvil_q {
        for b in q.blocks() {
            push_array(
                &mut entries,
                &mut payload,
                format!("param/{}", b.name()),
                &b.value,
            );
        }
    }
    for (group, adam) in [
        ("theta", &state.adam_theta),
        ("phi", &state.adam_phi),
        ("psi", &state.adam_psi),
    ] {
        for (name, (m, v)) in adam.moments() {
            push_array(
                &mut entries,
                &mut payload,
                format!("adam_{group}/m/{name}"),
                m,
            );
            push_array(
                &mut entries,
                &mut payload,
                format!("adam_{group}/v/{name}"),
                v,
            );
        }
    }
    if let Some(pcd) = &state.pcd {
        push_array(&mut entries, &mut payload, "pcd/v".into(), &pcd.v);
        for (i, h) in pcd.h.iter().enumerate() {
            push_array(&mut entries, &mut payload, format!("pcd/h{i}"), h);
        }
    }

    let header = Header {
        version: 1,
        config_hash: format!("{config_hash:016x}"),
        method: cfg.method,
        arch: ModelArch::of(&state.model),
        d_z: state.dec.as_ref().and_then(|d| match d {
            Decoder::Net(n) => Some(n.d_z),
            Decoder::Tabular(_) => None,
        }),
        nvil_components: state.nvil_q.as_ref().map(|q| q.dims().1),
        energy_offset: state.model.energy_offset(),
        iteration: state.iteration,
        data_cursor: state.data_cursor,
        rng: state.rng.state().map(|w| format!("{w:016x}")),
        adam_theta: AdamMeta {
            t: state.adam_theta.t,
            skipped: state.adam_theta.skipped,
        },
        adam_phi: AdamMeta {
            t: state.adam_phi.t,
            skipped: state.adam_phi.skipped,
        },
        adam_psi: AdamMeta {
            t: state.adam_psi.t,
            skipped: state.adam_psi.skipped,
        },
        pcd_chains: state.pcd.as_ref().map_or(0, |p| p.n_chains()),
        arrays: entries,
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let mut out = std::fs::File::create(path)?;
    out.write_all(MAGIC)?;
    out.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    out.write_all(&header_bytes)?;
    for x in payload {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a checkpoint back into a training state plus the recorded config
/// hash (callers compare it against their own config).
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(TrainState, Method, u64)> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    if header.version != 1 {
        return Err(Error::Checkpoint(format!(
            "unsupported version {}",
            header.version
        )));
    }

    let mut rest = Vec::new();
    file.read_to_end(&mut rest)?;
    let total: usize = header
        .arrays
        .iter()
        .map(|e| e.shape.iter().product::<usize>())
        .sum();
    if rest.len() != total * 8 {
        return Err(Error::Checkpoint(format!(
            "payload holds {} bytes, header expects {}",
            rest.len(),
            total * 8
        )));
    }
    let mut values = Vec::with_capacity(total);
    for chunk in rest.chunks_exact(8) {
        values.push(f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")));
    }

    // structural rebuild, then value fill
    let mut scaffold_rng = Prng::seed_from(0);
    let mut model = header.arch.build(0.0, &mut scaffold_rng)?;
    model.set_energy_offset(header.energy_offset);
    let mut enc = None;
    let mut dec = None;
    let mut aux = None;
    let mut nvil_q = None;
    match header.method {
        Method::Advil => {
            let d_z = header
                .d_z
                .ok_or_else(|| Error::Checkpoint("advil checkpoint missing d_z".into()))?;
            enc = Some(Encoder::Net(EncoderNet::zeros(&model)));
            let d = DecoderNet::random(&model, d_z, &mut scaffold_rng);
            aux = Some(AuxNet::random(d.d_h_top(), d_z, &mut scaffold_rng));
            dec = Some(Decoder::Net(d));
        }
        Method::Vcd => {
            enc = Some(Encoder::Net(EncoderNet::zeros(&model)));
        }
        Method::Nvil => {
            let k = header.nvil_components.ok_or_else(|| {
                Error::Checkpoint("nvil checkpoint missing component count".into())
            })?;
            nvil_q = Some(BernoulliMixture::random(model.d_v(), k, &mut scaffold_rng));
        }
        Method::Cd | Method::Pcd => {}
    }

    let rng_state: [u64; 4] = {
        let parse = |s: &String| u64::from_str_radix(s, 16);
        [
            parse(&header.rng[0]),
            parse(&header.rng[1]),
            parse(&header.rng[2]),
            parse(&header.rng[3]),
        ]
        .map(|r| r.map_err(|_| Error::Checkpoint("bad rng state".into())))
        .into_iter()
        .collect::<std::result::Result<Vec<u64>, Error>>()?
        .try_into()
        .expect("four words")
    };

    let mut state = TrainState {
        model,
        enc,
        dec,
        aux,
        nvil_q,
        adam_theta: crate::trainer::AdamState::new(),
        adam_phi: crate::trainer::AdamState::new(),
        adam_psi: crate::trainer::AdamState::new(),
        rng: Prng::from_state(rng_state),
        iteration: header.iteration,
        data_cursor: header.data_cursor,
        pcd: None,
    };
    state.adam_theta.t = header.adam_theta.t;
    state.adam_theta.skipped = header.adam_theta.skipped;
    state.adam_phi.t = header.adam_phi.t;
    state.adam_phi.skipped = header.adam_phi.skipped;
    state.adam_psi.t = header.adam_psi.t;
    state.adam_psi.skipped = header.adam_psi.skipped;

    // distribute payload
    let mut cursor = 0usize;
    let mut pcd_v: Option<DenseArray> = None;
    let mut pcd_h: Vec<DenseArray> = Vec::new();
    for entry in &header.arrays {
        let len: usize = entry.shape.iter().product();
        let slice = values[cursor..cursor + len].to_vec();
        cursor += len;
        let arr = DenseArray::new(entry.shape.clone(), slice)
            .map_err(|e| Error::Checkpoint(format!("array {}: {e}", entry.name)))?;
        if let Some(name) = entry.name.strip_prefix("param/") {
            fill_block(&mut state, name, arr)?;
        } else if let Some(rest) = entry.name.strip_prefix("adam_") {
            let (group, kind_name) = rest
                .split_once('/')
                .ok_or_else(|| Error::Checkpoint(format!("bad adam entry {}", entry.name)))?;
            let (kind, name) = kind_name
                .split_once('/')
                .ok_or_else(|| Error::Checkpoint(format!("bad adam entry {}", entry.name)))?;
            let adam = match group {
                "theta" => &mut state.adam_theta,
                "phi" => &mut state.adam_phi,
                "psi" => &mut state.adam_psi,
                _ => return Err(Error::Checkpoint(format!("unknown adam group {group}"))),
            };
            match kind {
                "m" => adam.restore_slot(name.to_string(), arr, DenseArray::zeros(&entry.shape)),
                "v" => {
                    // m was restored just before v in save order
                    let m = adam
                        .moments()
                        .find(|(n, _)| n.as_str() == name)
                        .map(|(_, (m, _))| m.clone())
                        .ok_or_else(|| Error::Checkpoint(format!("v before m for {name}")))?;
                    adam.restore_slot(name.to_string(), m, arr)
                }
                _ => return Err(Error::Checkpoint(format!("unknown adam kind {kind}"))),
            }
        } else if entry.name == "pcd/v" {
            pcd_v = Some(arr);
        } else if entry.name.starts_with("pcd/h") {
            pcd_h.push(arr);
        } else {
            return Err(Error::Checkpoint(format!("unknown entry {}", entry.name)));
        }
    }
    if header.pcd_chains > 0 {
        state.pcd = Some(GibbsState {
            v: pcd_v.ok_or_else(|| Error::Checkpoint("missing pcd visibles".into()))?,
            h: pcd_h,
        });
    }

    let config_hash = u64::from_str_radix(&header.config_hash, 16)
        .map_err(|_| Error::Checkpoint("bad config hash".into()))?;
    Ok((state, header.method, config_hash))
}

fn fill_block(state: &mut TrainState, name: &str, arr: DenseArray) -> Result<()> {
    let mut blocks: Vec<&mut crate::tape::ParamBlock> = state.model.theta_blocks_mut();
    if let Some(Encoder::Net(net)) = state.enc.as_mut() {
        blocks.extend(net.blocks_mut());
    }
    if let Some(Decoder::Net(net)) = state.dec.as_mut() {
        blocks.extend(net.blocks_mut());
    }
    if let Some(aux) = state.aux.as_mut() {
        blocks.extend(aux.blocks_mut());
    }
    if let Some(q) = state.nvil_q.as_mut() {
        blocks.extend(q.blocks_mut());
    }
    for b in blocks {
        if b.name() == name {
            if b.value.shape() != arr.shape() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for {name}: {:?} vs {:?}",
                    b.value.shape(),
                    arr.shape()
                )));
            }
            b.value = arr;
            return Ok(());
        }
    }
    Err(Error::Checkpoint(format!("no such parameter {name}")))
}

/// FNV-1a over canonical JSON, the run-identity hash stored in manifests
/// and checkpoints.
pub fn config_hash_of(json: &serde_json::Value) -> u64 {
    let canon = serde_json::to_string(json).unwrap_or_default();
    let mut h = 0xcbf29ce484222325u64;
    for b in canon.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
