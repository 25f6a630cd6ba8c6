//! Browser bindings for the lamlab pipeline.
//!
//! Three operations are exported: hull iteration, witness extraction, and
//! rasterization of a constructed laminate field. Inputs and outputs are
//! JSON strings so the page needs no generated types; failures come back as
//! `{"error": "..."}` rather than exceptions, which also keeps every
//! function callable (and tested) on the host target.

use wasm_bindgen::prelude::wasm_bindgen;

use lamlab::construct::{build_general, select_params, Field};
use lamlab::fem::Polygon;
use lamlab::lamhull::coord::rat_to_json;
use lamlab::lamhull::{extract_witness, lamination_hull, lamination_level, BoxSet, Level};
use lamlab::matgeom::DiagMatF;
use lamlab::Result;
use serde_json::{json, Value};

fn err_json(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

/// Apply `steps` lamination iterations and report the resulting box union
/// together with the level of the zero matrix (searched up to `steps`).
#[wasm_bindgen]
pub fn hull_json(set_json: &str, steps: u32) -> String {
    let set = match BoxSet::from_json_str(set_json) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    let hull = lamination_hull(&set, steps);
    let level = match lamination_level(&set, steps) {
        Level::Finite(l) => json!(l),
        Level::ExceedsCap => Value::Null,
    };
    json!({ "hull": hull.to_json(), "level": level, "boxes": hull.len() }).to_string()
}

/// Extract and re-verify the splitting tree of the zero matrix.
#[wasm_bindgen]
pub fn witness_json(set_json: &str, cap: u32) -> String {
    let set = match BoxSet::from_json_str(set_json) {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    let tree = match extract_witness(&set, cap) {
        Ok(t) => t,
        Err(e) => return err_json(e),
    };
    if let Err(e) = tree.verify() {
        return err_json(e);
    }
    let mut out = tree.to_json();
    out["sigma"] = Value::Array(
        tree.unique_leaves()
            .iter()
            .map(|m| json!([rat_to_json(&m.d1), rat_to_json(&m.d2)]))
            .collect(),
    );
    out.to_string()
}

fn build_field(set_json: &str, h: f64) -> Result<(Field, Vec<DiagMatF>)> {
    let set = BoxSet::from_json_str(set_json)?;
    let tree = extract_witness(&set, 12)?;
    tree.verify()?;
    let params = select_params(tree.level, h, &tree)?;
    let omega = Polygon::rectangle(0.0, 0.0, 1.0, 1.0)?;
    let field = build_general(&tree, &params, h, &omega)?;
    let sigma = tree.unique_leaves().iter().map(|m| m.to_f64()).collect();
    Ok((field, sigma))
}

/// Construction metadata for the unit-square laminate field at mesh size
/// `h`: level, parameters, and the distinct gradient values with the
/// palette colors [`field_raster`] uses for them.
#[wasm_bindgen]
pub fn field_info(set_json: &str, h: f64) -> String {
    let (field, sigma) = match build_field(set_json, h) {
        Ok(p) => p,
        Err(e) => return err_json(e),
    };
    let phases: Vec<Value> = sigma
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let [r, g, b] = PALETTE[i % PALETTE.len()];
            json!({ "gradient": [m.d1, m.d2], "color": format!("#{r:02x}{g:02x}{b:02x}") })
        })
        .collect();
    json!({
        "level": field.level(),
        "lipschitz": field.lipschitz(),
        "phases": phases,
    })
    .to_string()
}

const PALETTE: [[u8; 3]; 8] = [
    [0x1b, 0x9e, 0x77],
    [0xd9, 0x5f, 0x02],
    [0x75, 0x70, 0xb3],
    [0xe7, 0x29, 0x8a],
    [0x66, 0xa6, 0x1e],
    [0xe6, 0xab, 0x02],
    [0xa6, 0x76, 0x1d],
    [0x66, 0x66, 0x66],
];

/// Rasterize the gradient phases of the unit-square laminate field as an
/// RGBA image, `px` by `px` pixels, row 0 at the top. Pixels whose gradient
/// matches a witness leaf get that leaf's palette color; cutoff and
/// transition regions come out dark. Returns an empty vector on error
/// (query [`field_info`] for the message).
#[wasm_bindgen]
pub fn field_raster(set_json: &str, h: f64, px: u32) -> Vec<u8> {
    let Ok((field, sigma)) = build_field(set_json, h) else {
        return Vec::new();
    };
    if px == 0 || px > 4096 {
        return Vec::new();
    }
    let n = px as usize;
    let mut out = vec![0u8; n * n * 4];
    for iy in 0..n {
        // Image rows go top-down, field coordinates bottom-up.
        let y = 1.0 - (iy as f64 + 0.5) / n as f64;
        for ix in 0..n {
            let x = (ix as f64 + 0.5) / n as f64;
            let rgb = match field.gradient([x, y]) {
                Some(g) => sigma
                    .iter()
                    .position(|m| (m.d1 - g.d1).abs() <= 1e-9 && (m.d2 - g.d2).abs() <= 1e-9)
                    .map_or([0x30, 0x30, 0x38], |i| PALETTE[i % PALETTE.len()]),
                None => [0x14, 0x14, 0x1c],
            };
            let at = (iy * n + ix) * 4;
            out[at..at + 3].copy_from_slice(&rgb);
            out[at + 3] = 0xff;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAIR: &str = r#"{"points": [[1, 0], [-1, 0]]}"#;

    #[test]
    fn hull_reports_boxes_and_level() {
        let v: Value = serde_json::from_str(&hull_json(PAIR, 2)).unwrap();
        assert_eq!(v["level"], json!(1));
        assert_eq!(v["hull"]["boxes"], json!([[-1, 1, 0, 0]]));

        let v: Value = serde_json::from_str(&hull_json("{bad", 1)).unwrap();
        assert!(v["error"].as_str().unwrap().contains("invalid JSON"));
    }

    #[test]
    fn witness_includes_the_leaf_set() {
        let v: Value = serde_json::from_str(&witness_json(PAIR, 12)).unwrap();
        assert_eq!(v["level"], json!(1));
        assert_eq!(v["sigma"].as_array().unwrap().len(), 2);

        let v: Value = serde_json::from_str(&witness_json(r#"{"points": [[3, 3]]}"#, 2)).unwrap();
        assert!(v["error"].as_str().unwrap().contains("cap"));
    }

    #[test]
    fn raster_paints_both_phases_of_a_simple_laminate() {
        let info: Value = serde_json::from_str(&field_info(PAIR, 0.01)).unwrap();
        assert_eq!(info["level"], json!(1));
        assert_eq!(info["phases"].as_array().unwrap().len(), 2);

        let px = 64;
        let img = field_raster(PAIR, 0.01, px);
        assert_eq!(img.len(), (px * px * 4) as usize);
        let mut seen = std::collections::HashSet::new();
        for p in img.chunks(4) {
            seen.insert([p[0], p[1], p[2]]);
            assert_eq!(p[3], 0xff);
        }
        assert!(seen.contains(&PALETTE[0]) && seen.contains(&PALETTE[1]), "{seen:?}");

        assert!(field_raster("{bad", 0.01, 8).is_empty());
        assert!(field_raster(PAIR, 0.01, 0).is_empty());
    }
}
