//! Modulation and coding scheme table.
//!
//! The default table is the LTE uplink (PUSCH) MCS table shipped in
//! `fixtures/lte_ul_mcs.csv`. A replacement table can be loaded from any text
//! file with `index,modulation_order,code_rate` lines; `#` starts a comment.

use std::path::Path;

use crate::error::{Error, Result};

/// Highest MCS index an uplink grant can carry.
pub const MAX_MCS_INDEX: u32 = 31;

const LTE_UPLINK_TABLE: &str = include_str!("../fixtures/lte_ul_mcs.csv");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsEntry {
    pub index: u8,
    /// Bits per constellation symbol: 2 (QPSK), 4 (16QAM) or 6 (64QAM).
    pub modulation_order: u8,
    /// Payload bits per coded bit, in (0, 1).
    pub code_rate: f64,
}

impl McsEntry {
    pub fn modulation_name(&self) -> &'static str {
        match self.modulation_order {
            2 => "QPSK",
            4 => "16QAM",
            6 => "64QAM",
            _ => "unknown",
        }
    }
}

/// MCS lookup table, one optional slot per index 0..=31.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    slots: Vec<Option<McsEntry>>,
}

impl Default for McsTable {
    fn default() -> Self {
        Self::lte_uplink()
    }
}

impl McsTable {
    /// The built-in LTE uplink table (indices 0-28).
    pub fn lte_uplink() -> Self {
        Self::parse(LTE_UPLINK_TABLE).expect("built-in MCS table is valid")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Validation(msg) | Error::Domain(msg) => Error::format(path, msg),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut slots = vec![None; MAX_MCS_INDEX as usize + 1];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |what: &str| {
                Error::Validation(format!("MCS table line {}: {what}: {raw:?}", lineno + 1))
            };
            if fields.len() != 3 {
                return Err(bad("expected index,modulation_order,code_rate"));
            }
            let index: u32 = fields[0].parse().map_err(|_| bad("bad index"))?;
            let modulation_order: u8 = fields[1].parse().map_err(|_| bad("bad modulation order"))?;
            let code_rate: f64 = fields[2].parse().map_err(|_| bad("bad code rate"))?;
            if index > MAX_MCS_INDEX {
                return Err(bad("index outside 0..=31"));
            }
            if !matches!(modulation_order, 2 | 4 | 6) {
                return Err(bad("modulation order must be 2, 4 or 6"));
            }
            if !(code_rate > 0.0 && code_rate < 1.0) {
                return Err(bad("code rate must lie in (0, 1)"));
            }
            let slot = &mut slots[index as usize];
            if slot.is_some() {
                return Err(bad("duplicate index"));
            }
            *slot = Some(McsEntry {
                index: index as u8,
                modulation_order,
                code_rate,
            });
        }
        let table = Self { slots };
        table.check_rate_order()?;
        Ok(table)
    }

    fn check_rate_order(&self) -> Result<()> {
        for order in [2u8, 4, 6] {
            let rates: Vec<&McsEntry> = self
                .entries()
                .filter(|e| e.modulation_order == order)
                .collect();
            for pair in rates.windows(2) {
                if pair[1].code_rate <= pair[0].code_rate {
                    return Err(Error::Validation(format!(
                        "code rate must increase with index within modulation order {order}: \
                         MCS {} has {} but MCS {} has {}",
                        pair[0].index, pair[0].code_rate, pair[1].index, pair[1].code_rate
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = &McsEntry> {
        self.slots.iter().flatten()
    }

    pub fn lookup(&self, index: u32) -> Result<McsEntry> {
        if index > MAX_MCS_INDEX {
            return Err(Error::Domain(format!(
                "MCS index {index} outside 0..={MAX_MCS_INDEX}"
            )));
        }
        self.slots[index as usize].ok_or_else(|| {
            Error::Domain(format!("MCS index {index} has no entry in the active table"))
        })
    }
}

/// Looks `index` up in the built-in LTE uplink table.
pub fn mcs_table_lookup(index: u32) -> Result<McsEntry> {
    McsTable::lte_uplink().lookup(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mcs_8_is_qpsk() {
        assert_eq!(mcs_table_lookup(8).unwrap().modulation_order, 2);
    }

    #[test]
    fn mcs_16_is_16qam() {
        assert_eq!(mcs_table_lookup(16).unwrap().modulation_order, 4);
    }

    #[test]
    fn index_32_is_domain_error() {
        let err = mcs_table_lookup(32).unwrap_err();
        assert!(matches!(err, Error::Domain(ref m) if m.contains("32")), "{err}");
    }

    #[test]
    fn reserved_indices_have_no_entry() {
        for idx in 29..=31 {
            assert!(matches!(mcs_table_lookup(idx), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn default_table_modulation_regions() {
        let t = McsTable::lte_uplink();
        for e in t.entries() {
            let expect = match e.index {
                0..=10 => 2,
                11..=20 => 4,
                _ => 6,
            };
            assert_eq!(e.modulation_order, expect, "MCS {}", e.index);
        }
        assert_eq!(t.entries().count(), 29);
    }

    #[test]
    fn parse_rejects_bad_lines() {
        assert!(McsTable::parse("8,3,0.5").is_err());
        assert!(McsTable::parse("8,2,1.0").is_err());
        assert!(McsTable::parse("40,2,0.5").is_err());
        assert!(McsTable::parse("8,2,0.5\n8,2,0.6").is_err());
        assert!(McsTable::parse("8,2").is_err());
        // rate must rise within a modulation order
        assert!(McsTable::parse("8,2,0.5\n9,2,0.4").is_err());
    }

    #[test]
    fn parse_custom_table() {
        let t = McsTable::parse("# custom\n0,2,0.1\n1,4,0.2 # trailing\n\n").unwrap();
        assert_eq!(t.lookup(1).unwrap().modulation_order, 4);
        assert!(t.lookup(2).is_err());
    }
}
