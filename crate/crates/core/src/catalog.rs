//! The instruction database: encoding patterns plus pseudocode,
//! loadable from data files so operations can be added without
//! recompiling. A bundled catalog covers the data-processing core and
//! the two branch forms.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use crate::ast::{OperationAst, ParamKind};
use crate::fast::lower::{lower_operation, ExecutableOp};
use crate::parser::{parse_operation, resolve_old_params, ParseError};

/// Bits 25 and 11..0 carry the addressing-mode-1 shifter operand and
/// are owned by the decoder, not by encoding fields.
pub const SHIFTER_BITS: u32 = 0x0200_0FFF;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodingField {
    pub name: String,
    pub hi: u8,
    pub lo: u8,
}

impl EncodingField {
    pub fn width(&self) -> u32 {
        (self.hi - self.lo + 1) as u32
    }

    pub fn mask(&self) -> u32 {
        let w = self.width();
        let m = if w == 32 { u32::MAX } else { (1u32 << w) - 1 };
        m << self.lo
    }

    pub fn extract(&self, w: u32) -> u32 {
        (w & self.mask()) >> self.lo
    }
}

/// A word `w` encodes this operation iff `w & mask == value`; `fields`
/// name the variable bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodingPattern {
    pub mask: u32,
    pub value: u32,
    pub fields: Vec<EncodingField>,
}

impl EncodingPattern {
    pub fn matches(&self, w: u32) -> bool {
        w & self.mask == self.value
    }

    pub fn field(&self, name: &str) -> Option<(usize, &EncodingField)> {
        self.fields.iter().enumerate().find(|(_, f)| f.name == name)
    }
}

#[derive(Clone, Debug)]
pub struct OperationSpec {
    pub name: String,
    pub pattern: EncodingPattern,
    pub has_shifter: bool,
    /// Summary of the flags the operation may update (informational).
    pub flags_affected: String,
    /// Pseudocode source text as loaded.
    pub pseudocode: String,
}

/// Where each executable-op parameter comes from when an instruction
/// is decoded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArgSource {
    Field(u8),
    ShifterValue,
    ShifterCarry,
}

/// A fully loaded operation: spec, resolved AST, lowered form, and the
/// parameter binding map.
#[derive(Clone, Debug)]
pub struct LoadedOp {
    pub spec: OperationSpec,
    pub ast: OperationAst,
    pub exe: ExecutableOp,
    pub arg_sources: Vec<ArgSource>,
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{op}: bad encoding descriptor: {msg}")]
    Enc { op: String, msg: String },
    #[error("{op}: pseudocode: {source}")]
    Parse { op: String, source: ParseError },
    #[error("{op}: {msg}")]
    Validate { op: String, msg: String },
}

#[derive(Debug)]
pub struct Catalog {
    ops: Vec<LoadedOp>,
    /// Match order: most-specific masks first.
    match_order: Vec<u16>,
}

impl Catalog {
    pub fn ops(&self) -> &[LoadedOp] {
        &self.ops
    }

    pub fn get(&self, ix: usize) -> &LoadedOp {
        &self.ops[ix]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.ops.iter().position(|o| o.spec.name == name)
    }

    pub fn match_order(&self) -> impl Iterator<Item = (usize, &LoadedOp)> {
        self.match_order.iter().map(move |&i| (i as usize, &self.ops[i as usize]))
    }

    /// The compiled-in operation set.
    pub fn bundled() -> &'static Catalog {
        static CATALOG: OnceLock<Catalog> = OnceLock::new();
        CATALOG.get_or_init(|| {
            Catalog::from_sources(
                BUNDLED.iter().map(|(n, e, p)| (n.to_string(), e.to_string(), p.to_string())),
            )
            .expect("bundled catalog is well-formed")
        })
    }

    /// Load `<op>.enc` / `<op>.pseudo` pairs from a directory.
    pub fn load_dir(dir: &Path) -> Result<Catalog, CatalogError> {
        let mut stems: Vec<String> = std::fs::read_dir(dir)?
            .filter_map(|e| {
                let p = e.ok()?.path();
                if p.extension()? == "enc" {
                    Some(p.file_stem()?.to_string_lossy().into_owned())
                } else {
                    None
                }
            })
            .collect();
        stems.sort();
        let mut sources = Vec::new();
        for stem in stems {
            let enc = std::fs::read_to_string(dir.join(format!("{stem}.enc")))?;
            let pseudo_path = dir.join(format!("{stem}.pseudo"));
            if !pseudo_path.exists() {
                return Err(CatalogError::Enc {
                    op: stem.clone(),
                    msg: "missing matching .pseudo file".into(),
                });
            }
            let pseudo = std::fs::read_to_string(pseudo_path)?;
            sources.push((stem, enc, pseudo));
        }
        if sources.is_empty() {
            return Err(CatalogError::Enc { op: dir.display().to_string(), msg: "no .enc files".into() });
        }
        Catalog::from_sources(sources.into_iter())
    }

    pub fn from_sources(
        sources: impl Iterator<Item = (String, String, String)>,
    ) -> Result<Catalog, CatalogError> {
        let mut ops = Vec::new();
        for (stem, enc, pseudo) in sources {
            ops.push(load_op(&stem, &enc, &pseudo)?);
        }
        let mut match_order: Vec<u16> = (0..ops.len() as u16).collect();
        match_order.sort_by_key(|&i| {
            let o = &ops[i as usize];
            (std::cmp::Reverse(o.spec.pattern.mask.count_ones()), o.spec.name.clone())
        });
        Ok(Catalog { ops, match_order })
    }
}

fn load_op(stem: &str, enc: &str, pseudo: &str) -> Result<LoadedOp, CatalogError> {
    let spec = parse_enc(stem, enc, pseudo)?;
    let parsed = parse_operation(pseudo)
        .map_err(|source| CatalogError::Parse { op: stem.to_string(), source })?;
    if parsed.ident.name != spec.name {
        return Err(CatalogError::Validate {
            op: stem.to_string(),
            msg: format!(
                "pseudocode header names `{}` but descriptor names `{}`",
                parsed.ident.name, spec.name
            ),
        });
    }
    let ast = resolve_old_params(&parsed);
    let exe = lower_operation(&ast).map_err(|e| CatalogError::Validate {
        op: stem.to_string(),
        msg: e.to_string(),
    })?;
    let arg_sources = bind_params(stem, &spec, &exe)?;
    Ok(LoadedOp { spec, ast, exe, arg_sources })
}

/// Check the parameter list against the field list plus the shifter
/// operand, and record where each argument comes from.
fn bind_params(
    stem: &str,
    spec: &OperationSpec,
    exe: &ExecutableOp,
) -> Result<Vec<ArgSource>, CatalogError> {
    let validate = |ok: bool, msg: String| {
        if ok {
            Ok(())
        } else {
            Err(CatalogError::Validate { op: stem.to_string(), msg })
        }
    };
    let mut used: HashSet<&str> = HashSet::new();
    let mut sources = Vec::with_capacity(exe.params.len());
    for (name, kind) in &exe.params {
        used.insert(name.as_str());
        let src = if name == "shifter_operand" {
            validate(spec.has_shifter, "parameter shifter_operand but `shifter no`".into())?;
            validate(*kind == ParamKind::Word, "shifter_operand must be a word".into())?;
            ArgSource::ShifterValue
        } else if name == "shifter_carry_out" {
            validate(spec.has_shifter, "parameter shifter_carry_out but `shifter no`".into())?;
            validate(*kind == ParamKind::Bit, "shifter_carry_out must be a bit".into())?;
            ArgSource::ShifterCarry
        } else {
            let Some((ix, field)) = spec.pattern.field(name) else {
                return Err(CatalogError::Validate {
                    op: stem.to_string(),
                    msg: format!("parameter `{name}` has no encoding field"),
                });
            };
            let field_max = if field.width() >= 32 { u32::MAX } else { (1u32 << field.width()) - 1 };
            validate(
                field_max <= kind.max_value(),
                format!("field `{name}` ({} bits) exceeds its {} kind", field.width(), kind.name()),
            )?;
            ArgSource::Field(ix as u8)
        };
        sources.push(src);
    }
    for f in &spec.pattern.fields {
        validate(used.contains(f.name.as_str()), format!("encoding field `{}` is not a parameter", f.name))?;
    }
    // the block builder decides branchiness from field arguments alone
    for &slot in &exe.pc_param_slots {
        validate(
            matches!(sources[slot as usize], ArgSource::Field(_)),
            format!("register-write index `{}` must be an encoding field", exe.params[slot as usize].0),
        )?;
    }
    Ok(sources)
}

fn parse_enc(stem: &str, enc: &str, pseudo: &str) -> Result<OperationSpec, CatalogError> {
    let fail = |msg: String| CatalogError::Enc { op: stem.to_string(), msg };
    let mut name = None;
    let mut mask = None;
    let mut value = None;
    let mut has_shifter = None;
    let mut flags = String::new();
    let mut fields: Vec<EncodingField> = Vec::new();

    let parse_hex = |s: &str| -> Option<u32> {
        let s = s.trim();
        let hex = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"))?;
        u32::from_str_radix(hex, 16).ok()
    };

    for line in enc.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        match key {
            "name" => name = Some(rest.to_string()),
            "mask" => mask = Some(parse_hex(rest).ok_or_else(|| fail(format!("bad mask `{rest}`")))?),
            "value" => {
                value = Some(parse_hex(rest).ok_or_else(|| fail(format!("bad value `{rest}`")))?)
            }
            "shifter" => {
                has_shifter = Some(match rest {
                    "yes" => true,
                    "no" => false,
                    other => return Err(fail(format!("shifter must be yes/no, got `{other}`"))),
                })
            }
            "flags" => flags = rest.trim_start_matches('-').to_string(),
            "field" => {
                let mut it = rest.split_whitespace();
                let (Some(fname), Some(hi), Some(lo), None) =
                    (it.next(), it.next(), it.next(), it.next())
                else {
                    return Err(fail(format!("field line must be `field <name> <hi> <lo>`: `{line}`")));
                };
                let hi: u8 = hi.parse().map_err(|_| fail(format!("bad hi bit `{hi}`")))?;
                let lo: u8 = lo.parse().map_err(|_| fail(format!("bad lo bit `{lo}`")))?;
                if lo > hi || hi > 31 {
                    return Err(fail(format!("bad field range {hi}..{lo}")));
                }
                fields.push(EncodingField { name: fname.to_string(), hi, lo });
            }
            other => return Err(fail(format!("unknown key `{other}`"))),
        }
    }

    let name = name.ok_or_else(|| fail("missing `name`".into()))?;
    let mask = mask.ok_or_else(|| fail("missing `mask`".into()))?;
    let value = value.ok_or_else(|| fail("missing `value`".into()))?;
    let has_shifter = has_shifter.ok_or_else(|| fail("missing `shifter`".into()))?;

    if value & !mask != 0 {
        return Err(fail("value has bits outside the mask".into()));
    }
    // fields must be disjoint from each other, the mask, and (when
    // present) the shifter bits
    let mut seen = if has_shifter { SHIFTER_BITS } else { 0 };
    if seen & mask != 0 {
        return Err(fail("mask overlaps the shifter bits".into()));
    }
    seen |= mask;
    for f in &fields {
        if f.mask() & seen != 0 {
            return Err(fail(format!("field `{}` overlaps the mask, shifter, or another field", f.name)));
        }
        seen |= f.mask();
    }

    Ok(OperationSpec {
        name,
        pattern: EncodingPattern { mask, value, fields },
        has_shifter,
        flags_affected: flags,
        pseudocode: pseudo.to_string(),
    })
}

macro_rules! bundled_ops {
    ($($stem:literal),+ $(,)?) => {
        &[$((
            $stem,
            include_str!(concat!("catalog_data/", $stem, ".enc")),
            include_str!(concat!("catalog_data/", $stem, ".pseudo")),
        )),+]
    };
}

/// The compiled-in sources, alphabetical like `load_dir`.
static BUNDLED: &[(&str, &str, &str)] = bundled_ops![
    "adc", "add", "and", "b", "bic", "bl", "cmn", "cmp", "eor", "mov", "mvn", "orr", "rsb",
    "rsc", "sbc", "sub", "teq", "tst",
];
