//! JSON weight files.
//!
//! Format: `{"dims":[1,4,4,1],"activation":"relu","channels":1,"layers":[{"W":[[..],..],"b":[..]},..]}`.
//! `W` rows are target neurons, columns source neurons. With `channels > 1`
//! every scalar becomes an array of length `channels`.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::space::{Activation, Architecture, LayerParams, WeightElement};

fn scalar_or_vec(x: &[f64]) -> Value {
    if x.len() == 1 {
        json!(x[0])
    } else {
        json!(x)
    }
}

pub fn to_json(v: &WeightElement) -> Value {
    let arch = v.arch();
    let layers: Vec<Value> = (0..v.num_layers())
        .map(|l| {
            let (d_out, d_in) = arch.layer_shape(l);
            let w: Vec<Value> = (0..d_out)
                .map(|i| Value::Array((0..d_in).map(|j| scalar_or_vec(v.w(l, i, j))).collect()))
                .collect();
            let b: Vec<Value> = (0..d_out).map(|i| scalar_or_vec(v.b(l, i))).collect();
            json!({ "W": w, "b": b })
        })
        .collect();
    json!({
        "dims": arch.dims(),
        "activation": arch.activation().name(),
        "channels": v.channels(),
        "layers": layers,
    })
}

fn parse_entry(x: &Value, c: usize, what: &str, out: &mut Vec<f64>) -> Result<()> {
    let bad = || Error::Parse(format!("{what}: expected {c} channel value(s)"));
    match x {
        Value::Number(n) if c == 1 => out.push(n.as_f64().ok_or_else(bad)?),
        Value::Array(a) if a.len() == c => {
            for y in a {
                out.push(y.as_f64().ok_or_else(bad)?);
            }
        }
        Value::Null => out.push(f64::NAN),
        _ => return Err(bad()),
    }
    Ok(())
}

pub fn from_json(value: &Value) -> Result<WeightElement> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Parse("top level must be an object".into()))?;
    let dims: Vec<usize> = obj
        .get("dims")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("missing 'dims'".into()))?
        .iter()
        .map(|d| d.as_u64().map(|x| x as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Parse("'dims' must hold non-negative integers".into()))?;
    let activation = match obj.get("activation") {
        None => Activation::Relu,
        Some(a) => Activation::parse(
            a.as_str()
                .ok_or_else(|| Error::Parse("'activation' must be a string".into()))?,
        )?,
    };
    let channels = obj.get("channels").and_then(Value::as_u64).unwrap_or(1) as usize;
    let arch = Architecture::new(dims, activation)?;
    let layers_json = obj
        .get("layers")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Parse("missing 'layers'".into()))?;
    if layers_json.len() != arch.num_layers() {
        return Err(Error::ShapeMismatch {
            layer: layers_json.len().min(arch.num_layers()) + 1,
            expected: format!("{} layers", arch.num_layers()),
            got: format!("{} layers", layers_json.len()),
        });
    }
    let mut layers = Vec::with_capacity(layers_json.len());
    for (l, lj) in layers_json.iter().enumerate() {
        let (d_out, d_in) = arch.layer_shape(l);
        let rows = lj
            .get("W")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse(format!("layer {} missing 'W'", l + 1)))?;
        let cols = rows.first().and_then(Value::as_array).map_or(0, Vec::len);
        if rows.len() != d_out || rows.iter().any(|r| r.as_array().map(Vec::len) != Some(d_in)) {
            return Err(Error::ShapeMismatch {
                layer: l + 1,
                expected: format!("{d_out}x{d_in}"),
                got: format!("{}x{}", rows.len(), cols),
            });
        }
        let mut w = Vec::with_capacity(d_out * d_in * channels);
        for (i, r) in rows.iter().enumerate() {
            for (j, x) in r.as_array().into_iter().flatten().enumerate() {
                parse_entry(x, channels, &format!("W_{}[{i}][{j}]", l + 1), &mut w)?;
            }
        }
        let bs = lj
            .get("b")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Parse(format!("layer {} missing 'b'", l + 1)))?;
        if bs.len() != d_out {
            return Err(Error::ShapeMismatch {
                layer: l + 1,
                expected: format!("b of length {d_out}"),
                got: format!("length {}", bs.len()),
            });
        }
        let mut b = Vec::with_capacity(d_out * channels);
        for (i, x) in bs.iter().enumerate() {
            parse_entry(x, channels, &format!("b_{}[{i}]", l + 1), &mut b)?;
        }
        layers.push(LayerParams { w, b });
    }
    WeightElement::new(arch, channels, layers)
}

pub fn from_str(s: &str) -> Result<WeightElement> {
    let value: Value = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
    from_json(&value)
}
