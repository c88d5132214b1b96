//! Universal CSV weight format.
//!
//! One block per layer:
//!
//! ```text
//! # layer <index> <rows> <cols>
//! w00,...,w0{cols-1},b0
//! ...
//! ```
//!
//! followed for actor networks by a `# logstd 1 <n>` block holding one
//! row. Numbers use the shortest decimal form that round-trips exactly,
//! so export -> import -> export is byte-identical and reloaded weights
//! give bit-identical forward passes.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{BounderError, Result};

use super::{Layer, NetworkWeights};

/// Serialize weights to the CSV format.
pub fn to_csv_string(weights: &NetworkWeights) -> String {
    let mut out = String::new();
    for (idx, layer) in weights.layers.iter().enumerate() {
        let rows = layer.weights.nrows();
        let cols = layer.weights.ncols();
        writeln!(out, "# layer {idx} {rows} {cols}").unwrap();
        for r in 0..rows {
            for c in 0..cols {
                write!(out, "{},", layer.weights[(r, c)]).unwrap();
            }
            writeln!(out, "{}", layer.bias[r]).unwrap();
        }
    }
    if let Some(log_std) = &weights.log_std {
        writeln!(out, "# logstd 1 {}", log_std.len()).unwrap();
        let row: Vec<String> = log_std.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    out
}

pub fn export_csv(weights: &NetworkWeights, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv_string(weights))
        .map_err(|e| BounderError::io(path.display().to_string(), e))
}

/// Parse the CSV format back into weights.
pub fn from_csv_string(text: &str) -> Result<NetworkWeights> {
    let mut layers: Vec<Layer> = Vec::new();
    let mut log_std: Option<Array1<f64>> = None;

    let mut lines = text.lines().enumerate().peekable();
    while let Some((line_no, line)) = lines.next() {
        let line_no = line_no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !trimmed.starts_with('#') {
            return Err(BounderError::MalformedHeader {
                line: line_no,
                detail: "expected a '# layer' or '# logstd' header".into(),
            });
        }
        let fields: Vec<&str> = trimmed[1..].split_whitespace().collect();
        match fields.as_slice() {
            ["layer", idx, rows, cols] => {
                let idx: usize = idx.parse().map_err(|_| BounderError::MalformedHeader {
                    line: line_no,
                    detail: format!("bad layer index {idx:?}"),
                })?;
                if idx != layers.len() {
                    return Err(BounderError::MalformedHeader {
                        line: line_no,
                        detail: format!("layer index {idx} out of order"),
                    });
                }
                if log_std.is_some() {
                    return Err(BounderError::MalformedHeader {
                        line: line_no,
                        detail: "layer block after logstd block".into(),
                    });
                }
                let rows: usize = parse_dim(rows, line_no)?;
                let cols: usize = parse_dim(cols, line_no)?;
                let mut weights = Array2::zeros((rows, cols));
                let mut bias = Array1::zeros(rows);
                for r in 0..rows {
                    let (data_line_no, data) =
                        lines.next().ok_or_else(|| BounderError::DimensionMismatch {
                            line: line_no,
                            detail: format!("layer {idx}: expected {rows} rows, file ended"),
                        })?;
                    let data_line_no = data_line_no + 1;
                    let values = parse_row(data, data_line_no)?;
                    if values.len() != cols + 1 {
                        return Err(BounderError::DimensionMismatch {
                            line: data_line_no,
                            detail: format!(
                                "layer {idx} row {r}: expected {} values, got {}",
                                cols + 1,
                                values.len()
                            ),
                        });
                    }
                    for c in 0..cols {
                        weights[(r, c)] = values[c];
                    }
                    bias[r] = values[cols];
                }
                layers.push(Layer { weights, bias });
            }
            ["logstd", "1", n] => {
                let n: usize = parse_dim(n, line_no)?;
                let (data_line_no, data) =
                    lines.next().ok_or_else(|| BounderError::DimensionMismatch {
                        line: line_no,
                        detail: "logstd block missing its data row".into(),
                    })?;
                let values = parse_row(data, data_line_no + 1)?;
                if values.len() != n {
                    return Err(BounderError::DimensionMismatch {
                        line: data_line_no + 1,
                        detail: format!("logstd: expected {n} values, got {}", values.len()),
                    });
                }
                log_std = Some(Array1::from_vec(values));
            }
            _ => {
                return Err(BounderError::MalformedHeader {
                    line: line_no,
                    detail: format!("unrecognized header {trimmed:?}"),
                });
            }
        }
    }

    if layers.is_empty() {
        return Err(BounderError::MalformedHeader {
            line: 0,
            detail: "no layer blocks found".into(),
        });
    }
    // Adjacent layer widths must chain.
    for i in 1..layers.len() {
        if layers[i].weights.ncols() != layers[i - 1].weights.nrows() {
            return Err(BounderError::DimensionMismatch {
                line: 0,
                detail: format!(
                    "layer {i} input width {} does not match layer {} output width {}",
                    layers[i].weights.ncols(),
                    i - 1,
                    layers[i - 1].weights.nrows()
                ),
            });
        }
    }
    Ok(NetworkWeights { layers, log_std })
}

pub fn import_csv(path: &Path) -> Result<NetworkWeights> {
    let text =
        std::fs::read_to_string(path).map_err(|e| BounderError::io(path.display().to_string(), e))?;
    from_csv_string(&text)
}

fn parse_dim(token: &str, line: usize) -> Result<usize> {
    let n: usize = token.parse().map_err(|_| BounderError::MalformedHeader {
        line,
        detail: format!("bad dimension {token:?}"),
    })?;
    if n == 0 {
        return Err(BounderError::MalformedHeader {
            line,
            detail: "zero dimension".into(),
        });
    }
    Ok(n)
}

fn parse_row(line: &str, line_no: usize) -> Result<Vec<f64>> {
    line.trim()
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| BounderError::UnparsableNumber {
                    line: line_no,
                    token: tok.to_string(),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::MlpSpec;
    use crate::rng::Stream;
    use ndarray::array;

    #[test]
    fn two_by_two_example_format() {
        let net = NetworkWeights {
            layers: vec![Layer {
                weights: array![[1.0, 2.0], [3.0, 4.0]],
                bias: array![5.0, 6.0],
            }],
            log_std: None,
        };
        let text = to_csv_string(&net);
        assert_eq!(text, "# layer 0 2 2\n1,2,5\n3,4,6\n");
    }

    #[test]
    fn export_import_export_is_byte_identical() {
        let spec = MlpSpec::new(vec![34, 16, 12]);
        let mut stream = Stream::seeded(21);
        let net = NetworkWeights::init(&spec, &mut stream).with_action_std(0.1);
        let first = to_csv_string(&net);
        let reloaded = from_csv_string(&first).unwrap();
        let second = to_csv_string(&reloaded);
        assert_eq!(first, second);
        assert_eq!(net, reloaded);
    }

    #[test]
    fn forward_is_bit_identical_after_roundtrip() {
        let spec = MlpSpec::new(vec![8, 10, 4]);
        let mut stream = Stream::seeded(33);
        let net = NetworkWeights::init(&spec, &mut stream).with_action_std(0.2);
        let reloaded = from_csv_string(&to_csv_string(&net)).unwrap();
        let mut inputs = Stream::seeded(34);
        for _ in 0..100 {
            let x: Vec<f64> = (0..8).map(|_| inputs.symmetric(3.0)).collect();
            let a = net.forward(&x).unwrap();
            let b = reloaded.forward(&x).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn malformed_header_is_distinct_error() {
        let text = "# laier 0 2 2\n1,2,5\n3,4,6\n";
        assert!(matches!(
            from_csv_string(text),
            Err(BounderError::MalformedHeader { .. })
        ));
    }

    #[test]
    fn row_count_mismatch_is_distinct_error() {
        let text = "# layer 0 2 2\n1,2,5\n";
        assert!(matches!(
            from_csv_string(text),
            Err(BounderError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn column_count_mismatch_is_distinct_error() {
        let text = "# layer 0 2 2\n1,2,5\n3,4\n";
        assert!(matches!(
            from_csv_string(text),
            Err(BounderError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unparsable_number_is_distinct_error() {
        let text = "# layer 0 1 2\n1,zap,5\n";
        match from_csv_string(text) {
            Err(BounderError::UnparsableNumber { token, .. }) => assert_eq!(token, "zap"),
            other => panic!("expected UnparsableNumber, got {other:?}"),
        }
    }

    mod properties {
        use super::*;
        use crate::neural::Layer;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            /// Every finite weight reloads bit-exactly.
            #[test]
            fn roundtrip_preserves_bits(values in proptest::collection::vec(-1.0e6f64..1.0e6, 6)) {
                let net = NetworkWeights {
                    layers: vec![Layer {
                        weights: Array2::from_shape_vec((2, 2), values[..4].to_vec()).unwrap(),
                        bias: Array1::from_vec(values[4..].to_vec()),
                    }],
                    log_std: None,
                };
                let reloaded = from_csv_string(&to_csv_string(&net)).unwrap();
                for (a, b) in net.layers[0].weights.iter().zip(reloaded.layers[0].weights.iter()) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }

    #[test]
    fn negative_zero_and_subnormals_roundtrip() {
        let net = NetworkWeights {
            layers: vec![Layer {
                weights: array![[-0.0, 5e-324], [1.0e300, -2.2250738585072014e-308]],
                bias: array![0.1, -0.3],
            }],
            log_std: None,
        };
        let reloaded = from_csv_string(&to_csv_string(&net)).unwrap();
        for (a, b) in net.layers[0]
            .weights
            .iter()
            .zip(reloaded.layers[0].weights.iter())
        {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
