//! Flat text model files. See `docs/model-format.md`.

use std::io::{self, BufRead, BufReader, Read, Write};

use super::forest::{DecisionTree, ForestParams, Node, RandomForest};
use super::{Classifier, LinearSvm, ModelError, Standardizer, TrainedModel};

pub const MODEL_MAGIC: &str = "aspfolio-model 1";

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_model<W: Write>(m: &TrainedModel, out: W) -> io::Result<()> {
    if let Some(bad) = m.labels.iter().find(|l| l.is_empty() || l.contains(char::is_whitespace)) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("label `{bad}` is empty or contains whitespace"),
        ));
    }
    let mut out = io::BufWriter::new(out);
    writeln!(out, "{MODEL_MAGIC}")?;
    writeln!(out, "kind {}", m.classifier.kind())?;
    writeln!(out, "labels {} {}", m.labels.len(), m.labels.join(" "))?;
    writeln!(out, "dims {}", m.standardizer.dims())?;
    writeln!(out, "mean {}", join(&m.standardizer.mean))?;
    writeln!(out, "stdev {}", join(&m.standardizer.stdev))?;
    match &m.classifier {
        Classifier::Svm(s) => {
            writeln!(out, "c {}", s.c)?;
            writeln!(out, "w {}", join(&s.w))?;
            writeln!(out, "b {}", s.b)?;
        }
        Classifier::Forest(f) => {
            let p = f.params;
            writeln!(
                out,
                "forest {} {} {} {} {}",
                f.trees.len(),
                p.max_depth,
                p.features_per_split,
                p.seed,
                f.classes
            )?;
            for t in &f.trees {
                writeln!(out, "tree {}", t.nodes.len())?;
                for n in &t.nodes {
                    match *n {
                        Node::Leaf { class } => writeln!(out, "L {class}")?,
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => writeln!(out, "S {feature} {threshold} {left} {right}")?,
                    }
                }
            }
        }
    }
    writeln!(out, "end")?;
    out.flush()
}

struct Lines<R> {
    inner: R,
    line: usize,
    buf: String,
}

impl<R: BufRead> Lines<R> {
    fn err(&self, message: impl Into<String>) -> ModelError {
        ModelError::Format {
            line: self.line,
            message: message.into(),
        }
    }

    fn next_line(&mut self) -> Result<&str, ModelError> {
        self.buf.clear();
        if self.inner.read_line(&mut self.buf)? == 0 {
            return Err(ModelError::Format {
                line: self.line + 1,
                message: "unexpected end of file".into(),
            });
        }
        self.line += 1;
        Ok(self.buf.trim())
    }

    /// Reads a line `<key> <fields...>` and returns the fields.
    fn keyed(&mut self, key: &str) -> Result<Vec<String>, ModelError> {
        let line = self.next_line()?.to_string();
        let mut it = line.split_ascii_whitespace();
        match it.next() {
            Some(k) if k == key => Ok(it.map(str::to_string).collect()),
            _ => Err(self.err(format!("expected `{key}`"))),
        }
    }

    fn numbers<T: std::str::FromStr>(&self, fields: &[String], n: usize) -> Result<Vec<T>, ModelError> {
        if fields.len() != n {
            return Err(self.err(format!("expected {n} values, found {}", fields.len())));
        }
        fields
            .iter()
            .map(|f| f.parse().map_err(|_| self.err(format!("cannot parse `{f}`"))))
            .collect()
    }

    fn finite(&self, v: Vec<f64>) -> Result<Vec<f64>, ModelError> {
        if v.iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(self.err("non-finite parameter"))
        }
    }
}

pub fn read_model<R: Read>(input: R) -> Result<TrainedModel, ModelError> {
    let mut r = Lines {
        inner: BufReader::new(input),
        line: 0,
        buf: String::new(),
    };
    if r.next_line()? != MODEL_MAGIC {
        return Err(r.err(format!("not a model file (expected `{MODEL_MAGIC}`)")));
    }
    let kind = r.keyed("kind")?;
    let kind = kind.first().cloned().unwrap_or_default();
    let labels = r.keyed("labels")?;
    let count: usize = r.numbers(&labels[..labels.len().min(1)], 1)?[0];
    if labels.len() != count + 1 || count == 0 {
        return Err(r.err("label count does not match"));
    }
    let labels = labels[1..].to_vec();
    let dims_f = r.keyed("dims")?;
    let dims: usize = r.numbers(&dims_f, 1)?[0];
    let f = r.keyed("mean")?;
    let mean = r.finite(r.numbers(&f, dims)?)?;
    let f = r.keyed("stdev")?;
    let stdev = r.finite(r.numbers(&f, dims)?)?;
    if stdev.iter().any(|s| *s < 0.0) {
        return Err(r.err("negative standard deviation"));
    }
    let standardizer = Standardizer { mean, stdev };

    let classifier = match kind.as_str() {
        "svm" => {
            if labels.len() != 2 {
                return Err(r.err("svm models need exactly two labels"));
            }
            let f = r.keyed("c")?;
            let c = r.finite(r.numbers(&f, 1)?)?[0];
            let f = r.keyed("w")?;
            let w = r.finite(r.numbers(&f, dims)?)?;
            let f = r.keyed("b")?;
            let b = r.finite(r.numbers(&f, 1)?)?[0];
            Classifier::Svm(LinearSvm { w, b, c })
        }
        "forest" => {
            let f = r.keyed("forest")?;
            let v: Vec<u64> = r.numbers(&f, 5)?;
            let (trees, classes) = (v[0] as usize, v[4] as usize);
            if classes != labels.len() {
                return Err(r.err("class count does not match labels"));
            }
            let params = ForestParams {
                tree_count: trees,
                max_depth: v[1] as usize,
                features_per_split: v[2] as usize,
                seed: v[3],
            };
            let mut list = Vec::with_capacity(trees);
            for _ in 0..trees {
                let f = r.keyed("tree")?;
                let n: usize = r.numbers(&f, 1)?[0];
                let mut nodes = Vec::with_capacity(n);
                for _ in 0..n {
                    let line = r.next_line()?.to_string();
                    let fields: Vec<String> = line.split_ascii_whitespace().map(str::to_string).collect();
                    let node = match fields.first().map(String::as_str) {
                        Some("L") => {
                            let class: usize = r.numbers(&fields[1..], 1)?[0];
                            if class >= classes {
                                return Err(r.err("leaf class out of range"));
                            }
                            Node::Leaf { class }
                        }
                        Some("S") => {
                            if fields.len() != 5 {
                                return Err(r.err("split line needs 4 values"));
                            }
                            let idx: Vec<usize> = r.numbers(&[fields[1].clone()], 1)?;
                            let thr = r.finite(r.numbers(&fields[2..3], 1)?)?[0];
                            let kids: Vec<usize> = r.numbers(&fields[3..], 2)?;
                            if idx[0] >= dims || kids.iter().any(|&k| k >= n) {
                                return Err(r.err("split refers outside the tree"));
                            }
                            Node::Split {
                                feature: idx[0],
                                threshold: thr,
                                left: kids[0],
                                right: kids[1],
                            }
                        }
                        _ => return Err(r.err("expected a node line (`L` or `S`)")),
                    };
                    nodes.push(node);
                }
                if nodes.is_empty() {
                    return Err(r.err("empty tree"));
                }
                // Children must come after their parent, which rules out cycles.
                for (i, n) in nodes.iter().enumerate() {
                    if let Node::Split { left, right, .. } = *n {
                        if left <= i || right <= i {
                            return Err(r.err("child index precedes its parent"));
                        }
                    }
                }
                list.push(DecisionTree { nodes });
            }
            Classifier::Forest(RandomForest {
                params,
                classes,
                trees: list,
            })
        }
        other => return Err(r.err(format!("unknown model kind `{other}`"))),
    };
    if r.next_line()? != "end" {
        return Err(r.err("expected `end`"));
    }
    Ok(TrainedModel {
        labels,
        standardizer,
        classifier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::forest;

    fn svm_model() -> TrainedModel {
        TrainedModel {
            labels: vec!["clasp*".into(), "wasp*".into()],
            standardizer: Standardizer {
                mean: vec![0.1, 0.25],
                stdev: vec![0.3, 0.0],
            },
            classifier: Classifier::Svm(LinearSvm {
                w: vec![1.5, -0.000123],
                b: -0.1,
                c: 10.0,
            }),
        }
    }

    #[test]
    fn svm_file_shape() {
        let mut buf = Vec::new();
        write_model(&svm_model(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "aspfolio-model 1\nkind svm\nlabels 2 clasp* wasp*\ndims 2\nmean 0.1 0.25\n\
             stdev 0.3 0\nc 10\nw 1.5 -0.000123\nb -0.1\nend\n"
        );
        assert_eq!(read_model(text.as_bytes()).unwrap(), svm_model());
    }

    #[test]
    fn forest_round_trip() {
        let xs = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5], vec![0.9, 0.2]];
        let ys = vec![0, 1, 0, 1];
        let f = forest::fit(
            &xs,
            &ys,
            2,
            ForestParams {
                tree_count: 3,
                max_depth: 3,
                features_per_split: 1,
                seed: 5,
            },
        );
        let m = TrainedModel {
            labels: vec!["a".into(), "b".into()],
            standardizer: Standardizer::identity(2),
            classifier: Classifier::Forest(f),
        };
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert_eq!(read_model(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_files() {
        let good = {
            let mut buf = Vec::new();
            write_model(&svm_model(), &mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let cases = [
            good.replace("aspfolio-model 1", "aspfolio-model 2"),
            good.replace("kind svm", "kind nn"),
            good.replace("w 1.5 -0.000123", "w 1.5"),
            good.replace("b -0.1", "b NaN"),
            good.replace("end\n", ""),
            good.replace("labels 2", "labels 3"),
        ];
        for bad in cases {
            assert!(matches!(read_model(bad.as_bytes()), Err(ModelError::Format { .. })), "{bad}");
        }
    }

    #[test]
    fn whitespace_label_not_writable() {
        let mut m = svm_model();
        m.labels[0] = "my solver".into();
        assert!(write_model(&m, Vec::new()).is_err());
    }
}
