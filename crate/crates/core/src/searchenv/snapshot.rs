//! Binary index snapshots.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   b"CFIX"
//! version u16            (currently 1)
//! backend u8             0 = bm25, 1 = knn
//! reserved u8
//! top_k   u32
//! n_docs  u32, then n_docs x (u32 len, utf-8 doc_id)
//! bm25:   k1 f64, b f64, doc_len [u32; n_docs], n_terms u32,
//!         n_terms x (term string, n u32, n x (doc u32, tf u32))
//! knn:    provider u8 (0 hashed, 1 external + url string), dim u32,
//!         m u32, ef_construction u32, ef_search u32, seed u64, entry i64,
//!         levels [u8; n_docs], vectors [f32; n_docs * dim],
//!         per node per layer: (n u32, n x u32)
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{Backend, Bm25Index, EmbeddingProvider, ExternalEmbedder, Hnsw, HnswParams, SearchEndpoint, SearchError};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"CFIX";
pub const SNAPSHOT_VERSION: u16 = 1;

fn bad(msg: impl Into<String>) -> SearchError {
    SearchError::Snapshot(msg.into())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String, SearchError> {
    let n = r.read_u32::<LE>()? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| bad("doc id is not utf-8"))
}

pub fn write_snapshot<W: Write>(ep: &SearchEndpoint, w: &mut W) -> Result<(), SearchError> {
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_u16::<LE>(SNAPSHOT_VERSION)?;
    w.write_u8(match ep.backend() {
        Backend::Bm25(_) => 0,
        Backend::Knn { .. } => 1,
    })?;
    w.write_u8(0)?;
    w.write_u32::<LE>(ep.top_k() as u32)?;
    w.write_u32::<LE>(ep.doc_ids().len() as u32)?;
    for id in ep.doc_ids() {
        write_str(w, id)?;
    }
    match ep.backend() {
        Backend::Bm25(idx) => {
            w.write_f64::<LE>(idx.k1)?;
            w.write_f64::<LE>(idx.b)?;
            for &l in &idx.doc_len {
                w.write_u32::<LE>(l)?;
            }
            let mut terms: Vec<&String> = idx.postings.keys().collect();
            terms.sort();
            w.write_u32::<LE>(terms.len() as u32)?;
            for t in terms {
                write_str(w, t)?;
                let list = &idx.postings[t];
                w.write_u32::<LE>(list.len() as u32)?;
                for &(d, tf) in list {
                    w.write_u32::<LE>(d)?;
                    w.write_u32::<LE>(tf)?;
                }
            }
        }
        Backend::Knn { provider, graph } => {
            match provider {
                EmbeddingProvider::HashedBow { .. } => w.write_u8(0)?,
                EmbeddingProvider::External(e) => {
                    w.write_u8(1)?;
                    write_str(w, e.url())?;
                }
            }
            w.write_u32::<LE>(graph.dim as u32)?;
            let p = graph.params;
            w.write_u32::<LE>(p.m as u32)?;
            w.write_u32::<LE>(p.ef_construction as u32)?;
            w.write_u32::<LE>(p.ef_search as u32)?;
            w.write_u64::<LE>(p.seed)?;
            w.write_i64::<LE>(graph.entry.map_or(-1, |e| e as i64))?;
            w.write_all(&graph.levels)?;
            for &x in &graph.data {
                w.write_f32::<LE>(x)?;
            }
            for node in &graph.links {
                for layer in node {
                    w.write_u32::<LE>(layer.len() as u32)?;
                    for &n in layer {
                        w.write_u32::<LE>(n)?;
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(r: &mut R) -> Result<SearchEndpoint, SearchError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(bad("missing CFIX magic"));
    }
    let version = r.read_u16::<LE>()?;
    if version != SNAPSHOT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let backend_tag = r.read_u8()?;
    let _reserved = r.read_u8()?;
    let top_k = r.read_u32::<LE>()? as usize;
    let n = r.read_u32::<LE>()? as usize;
    let doc_ids = (0..n).map(|_| read_str(r)).collect::<Result<Vec<_>, _>>()?;
    let backend = match backend_tag {
        0 => {
            let k1 = r.read_f64::<LE>()?;
            let b = r.read_f64::<LE>()?;
            let doc_len = (0..n).map(|_| r.read_u32::<LE>()).collect::<Result<Vec<_>, _>>()?;
            let n_terms = r.read_u32::<LE>()? as usize;
            let mut postings = HashMap::with_capacity(n_terms);
            for _ in 0..n_terms {
                let t = read_str(r)?;
                let len = r.read_u32::<LE>()? as usize;
                let mut list = Vec::with_capacity(len);
                for _ in 0..len {
                    let d = r.read_u32::<LE>()?;
                    if d as usize >= n {
                        return Err(bad("posting references unknown doc"));
                    }
                    list.push((d, r.read_u32::<LE>()?));
                }
                postings.insert(t, list);
            }
            Backend::Bm25(Bm25Index::from_parts(k1, b, postings, doc_len))
        }
        1 => {
            let provider_tag = r.read_u8()?;
            let url = if provider_tag == 1 { Some(read_str(r)?) } else { None };
            let dim = r.read_u32::<LE>()? as usize;
            let provider = match (provider_tag, url) {
                (0, _) => EmbeddingProvider::HashedBow { dim },
                (1, Some(url)) => EmbeddingProvider::External(Arc::new(ExternalEmbedder::new(url, dim)?)),
                _ => return Err(bad("unknown embedding provider")),
            };
            let params = HnswParams {
                m: r.read_u32::<LE>()? as usize,
                ef_construction: r.read_u32::<LE>()? as usize,
                ef_search: r.read_u32::<LE>()? as usize,
                seed: r.read_u64::<LE>()?,
            };
            let entry = r.read_i64::<LE>()?;
            let mut levels = vec![0u8; n];
            r.read_exact(&mut levels)?;
            let mut data = vec![0f32; n * dim];
            r.read_f32_into::<LE>(&mut data)?;
            let mut links = Vec::with_capacity(n);
            for &lvl in &levels {
                let mut node = Vec::with_capacity(lvl as usize + 1);
                for _ in 0..=lvl {
                    let len = r.read_u32::<LE>()? as usize;
                    let ids = (0..len).map(|_| r.read_u32::<LE>()).collect::<Result<Vec<_>, _>>()?;
                    if ids.iter().any(|&i| i as usize >= n) {
                        return Err(bad("link references unknown node"));
                    }
                    node.push(ids);
                }
                links.push(node);
            }
            let graph = Hnsw {
                params,
                dim,
                data,
                levels,
                links,
                entry: if entry < 0 { None } else { Some(entry as u32) },
            };
            Backend::Knn { provider, graph }
        }
        other => return Err(bad(format!("unknown backend tag {other}"))),
    };
    Ok(SearchEndpoint::from_parts(doc_ids, top_k, backend))
}

pub fn save_snapshot(ep: &SearchEndpoint, path: impl AsRef<Path>) -> Result<(), SearchError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_snapshot(ep, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<SearchEndpoint, SearchError> {
    read_snapshot(&mut BufReader::new(File::open(path)?))
}
