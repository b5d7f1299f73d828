//! Versioned text dump of a trained net: all matrices, the binning, the
//! variant tag, and the checksum of the tree it was trained against.
//! Loading refuses a mismatched tree.

use std::fmt::Write as _;

use super::compose::Variant;
use super::linalg::Matrix;
use super::{CreativeBinning, DenseLayer, PropertyHeadNet};
use crate::error::{AcqError, Result};
use crate::tree::UnbalancedCostTree;

fn write_matrix(s: &mut String, name: &str, m: &Matrix) {
    let _ = writeln!(s, "{} {} {}", name, m.rows, m.cols);
    for i in 0..m.rows {
        let row = m
            .row(i)
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(s, "{row}");
    }
}

fn write_vec(s: &mut String, name: &str, v: &[f64]) {
    let vals = v
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    let _ = writeln!(s, "{} {} {}", name, v.len(), vals);
}

struct Parser<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Parser<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        for (i, line) in self.lines.by_ref() {
            if !line.trim().is_empty() {
                return Ok((i + 1, line));
            }
        }
        Err(AcqError::Parse {
            line: 0,
            message: "unexpected end of model file".into(),
        })
    }

    /// A line of the form `<tag> rest...`; verifies the tag.
    fn tagged(&mut self, tag: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, line) = self.next_line()?;
        let mut t: Vec<&str> = line.split_whitespace().collect();
        if t.first() != Some(&tag) {
            return Err(AcqError::Parse {
                line: n,
                message: format!("expected section '{tag}'"),
            });
        }
        t.remove(0);
        Ok((n, t))
    }

    fn matrix(&mut self, tag: &str) -> Result<Matrix> {
        let (n, head) = self.tagged(tag)?;
        let dims: Vec<usize> = head
            .iter()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| AcqError::Parse {
                line: n,
                message: format!("bad dimensions for '{tag}'"),
            })?;
        if dims.len() != 2 {
            return Err(AcqError::Parse {
                line: n,
                message: format!("expected rows cols after '{tag}'"),
            });
        }
        let (rows, cols) = (dims[0], dims[1]);
        if rows * cols > 100_000_000 {
            return Err(AcqError::SizeGuard(format!("matrix '{tag}' too large")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, line) = self.next_line()?;
            for t in line.split_whitespace() {
                data.push(t.parse::<f64>().map_err(|_| AcqError::Parse {
                    line: ln,
                    message: "bad number".into(),
                })?);
            }
            if data.len() % cols != 0 {
                return Err(AcqError::Parse {
                    line: ln,
                    message: format!("row width mismatch in '{tag}'"),
                });
            }
        }
        if data.len() != rows * cols {
            return Err(AcqError::Parse {
                line: n,
                message: format!("element count mismatch in '{tag}'"),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    fn vector(&mut self, tag: &str) -> Result<Vec<f64>> {
        let (n, toks) = self.tagged(tag)?;
        let perr = |m: String| AcqError::Parse {
            line: n,
            message: m,
        };
        if toks.is_empty() {
            return Err(perr(format!("missing length for '{tag}'")));
        }
        let len: usize = toks[0]
            .parse()
            .map_err(|_| perr(format!("bad length for '{tag}'")))?;
        let vals: Vec<f64> = toks[1..]
            .iter()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| perr("bad number".into()))?;
        if vals.len() != len {
            return Err(perr(format!("length mismatch in '{tag}'")));
        }
        Ok(vals)
    }

    fn scalar_line(&mut self, tag: &str) -> Result<(usize, String)> {
        let (n, toks) = self.tagged(tag)?;
        if toks.len() != 1 {
            return Err(AcqError::Parse {
                line: n,
                message: format!("expected single value after '{tag}'"),
            });
        }
        Ok((n, toks[0].to_string()))
    }
}

impl PropertyHeadNet {
    /// Serialize the net together with the checksum of its training tree.
    pub fn to_text(&self, tree_checksum: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "acq-model v1");
        let _ = writeln!(s, "tree_checksum {tree_checksum}");
        let _ = writeln!(s, "variant {}", self.variant.as_str());
        let _ = writeln!(s, "lipschitz_weight {}", self.lipschitz_weight);
        let _ = writeln!(s, "sparse_slots {}", self.sparse_slots);
        let _ = writeln!(s, "embedding_dim {}", self.embedding_dim);
        let _ = writeln!(s, "hash_buckets {}", self.hash_buckets);
        let _ = writeln!(s, "dense_dim {}", self.dense_dim);
        let bins = self
            .bins
            .boundaries()
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let _ = writeln!(s, "bins {bins}");
        let _ = writeln!(s, "trunk_layers {}", self.trunk.len());
        for (i, e) in self.embeddings.iter().enumerate() {
            write_matrix(&mut s, &format!("embedding{i}"), e);
        }
        for (i, l) in self.trunk.iter().enumerate() {
            write_matrix(&mut s, &format!("trunk{i}_w"), &l.w);
            write_vec(&mut s, &format!("trunk{i}_b"), &l.b);
        }
        write_matrix(&mut s, "classifier_w", &self.classifier_head.w);
        write_vec(&mut s, "classifier_b", &self.classifier_head.b);
        write_matrix(&mut s, "regression_w", &self.regression_head.w);
        write_vec(&mut s, "regression_b", &self.regression_head.b);
        let _ = writeln!(s, "end");
        s
    }

    /// Parse a model dump; returns the net and the tree checksum it was
    /// trained against.
    pub fn from_text(text: &str) -> Result<(Self, String)> {
        let mut p = Parser {
            lines: text.lines().enumerate(),
        };
        let (n, first) = p.next_line()?;
        if first.trim() != "acq-model v1" {
            return Err(AcqError::Parse {
                line: n,
                message: "bad model header".into(),
            });
        }
        let (_, checksum) = p.scalar_line("tree_checksum")?;
        let (vn, variant_name) = p.scalar_line("variant")?;
        let variant = Variant::parse(&variant_name).ok_or(AcqError::Parse {
            line: vn,
            message: format!("unknown variant '{variant_name}'"),
        })?;
        let parse_f64 = |(n, s): (usize, String)| -> Result<f64> {
            s.parse().map_err(|_| AcqError::Parse {
                line: n,
                message: "bad number".into(),
            })
        };
        let parse_usize = |(n, s): (usize, String)| -> Result<usize> {
            s.parse().map_err(|_| AcqError::Parse {
                line: n,
                message: "bad count".into(),
            })
        };
        let lipschitz_weight = parse_f64(p.scalar_line("lipschitz_weight")?)?;
        let sparse_slots = parse_usize(p.scalar_line("sparse_slots")?)?;
        let embedding_dim = parse_usize(p.scalar_line("embedding_dim")?)?;
        let hash_buckets = parse_usize(p.scalar_line("hash_buckets")?)?;
        let dense_dim = parse_usize(p.scalar_line("dense_dim")?)?;
        let (bn, bin_toks) = p.tagged("bins")?;
        let boundaries: Vec<u32> = bin_toks
            .iter()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| AcqError::Parse {
                line: bn,
                message: "bad bin boundary".into(),
            })?;
        let bins = CreativeBinning::new(&boundaries)?;
        let trunk_count = parse_usize(p.scalar_line("trunk_layers")?)?;

        let mut embeddings = Vec::with_capacity(sparse_slots);
        for i in 0..sparse_slots {
            let m = p.matrix(&format!("embedding{i}"))?;
            if m.rows != hash_buckets || m.cols != embedding_dim {
                return Err(AcqError::DimensionMismatch {
                    what: "embedding table",
                    expected: hash_buckets * embedding_dim,
                    got: m.rows * m.cols,
                });
            }
            embeddings.push(m);
        }
        let mut trunk = Vec::with_capacity(trunk_count);
        let mut fan_in = sparse_slots * embedding_dim + dense_dim;
        for i in 0..trunk_count {
            let w = p.matrix(&format!("trunk{i}_w"))?;
            let b = p.vector(&format!("trunk{i}_b"))?;
            if w.cols != fan_in || b.len() != w.rows {
                return Err(AcqError::DimensionMismatch {
                    what: "trunk layer",
                    expected: fan_in,
                    got: w.cols,
                });
            }
            fan_in = w.rows;
            trunk.push(DenseLayer { w, b });
        }
        let classifier_w = p.matrix("classifier_w")?;
        let classifier_b = p.vector("classifier_b")?;
        let regression_w = p.matrix("regression_w")?;
        let regression_b = p.vector("regression_b")?;
        for (w, b, what) in [
            (&classifier_w, &classifier_b, "classifier head"),
            (&regression_w, &regression_b, "regression head"),
        ] {
            if w.cols != fan_in || b.len() != w.rows {
                return Err(AcqError::DimensionMismatch {
                    what,
                    expected: fan_in,
                    got: w.cols,
                });
            }
        }
        if regression_w.rows != bins.n_bins() {
            return Err(AcqError::DimensionMismatch {
                what: "regression heads vs bins",
                expected: bins.n_bins(),
                got: regression_w.rows,
            });
        }
        let (en, last) = p.next_line()?;
        if last.trim() != "end" {
            return Err(AcqError::Parse {
                line: en,
                message: "expected 'end'".into(),
            });
        }
        Ok((
            PropertyHeadNet {
                embeddings,
                trunk,
                classifier_head: DenseLayer {
                    w: classifier_w,
                    b: classifier_b,
                },
                regression_head: DenseLayer {
                    w: regression_w,
                    b: regression_b,
                },
                variant,
                lipschitz_weight,
                bins,
                sparse_slots,
                embedding_dim,
                hash_buckets,
                dense_dim,
            },
            checksum,
        ))
    }

    /// Load a model dump and verify it belongs to `tree`.
    pub fn load_for_tree(text: &str, tree: &UnbalancedCostTree) -> Result<Self> {
        let (net, checksum) = Self::from_text(text)?;
        let actual = tree.checksum();
        if checksum != actual {
            return Err(AcqError::TreeMismatch {
                expected: checksum,
                got: actual,
            });
        }
        if net.classifier_count() != tree.classifier_count() {
            return Err(AcqError::DimensionMismatch {
                what: "classifier heads vs tree",
                expected: tree.classifier_count(),
                got: net.classifier_count(),
            });
        }
        Ok(net)
    }
}
