use serde::{Deserialize, Serialize};

/// How the TRSM count enters a ledger total.
///
/// The classic cost table counts GEMMs in FLOPs (one multiply-add = 2 FLOPs)
/// but the triangular solve in multiply-adds, which is where the familiar
/// "2.5 k²d for one MUD pass" comes from. `Table` reproduces that mixed
/// convention; `Strict` counts every multiply-add as two FLOPs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlopConvention {
    #[default]
    Table,
    Strict,
}

impl FlopConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            FlopConvention::Table => "table",
            FlopConvention::Strict => "strict",
        }
    }
}

/// Per-call count of dominant dense-kernel work.
///
/// Only the Gram/apply GEMMs, triangular solves and row-norm reductions are
/// counted; elementwise scalar work is ignored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopLedger {
    pub gemm_flops: u64,
    /// Stored as FLOPs, i.e. twice the multiply-add count.
    pub trsm_flops: u64,
    pub reduction_flops: u64,
}

impl FlopLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add_gemm(&mut self, flops: u64) {
        self.gemm_flops += flops;
    }

    pub(crate) fn add_trsm(&mut self, k: usize, d: usize) {
        let madds = ((k * k * d) as u64).div_ceil(2);
        self.trsm_flops += 2 * madds;
    }

    pub(crate) fn add_reduction(&mut self, flops: u64) {
        self.reduction_flops += flops;
    }

    pub fn trsm_multiply_adds(&self) -> u64 {
        self.trsm_flops / 2
    }

    /// Dominant-kernel total (reductions excluded) under `conv`.
    pub fn total(&self, conv: FlopConvention) -> u64 {
        match conv {
            FlopConvention::Table => self.gemm_flops + self.trsm_multiply_adds(),
            FlopConvention::Strict => self.gemm_flops + self.trsm_flops,
        }
    }

    pub fn total_with_reductions(&self, conv: FlopConvention) -> u64 {
        self.total(conv) + self.reduction_flops
    }

    pub fn merge(&mut self, other: &FlopLedger) {
        self.gemm_flops += other.gemm_flops;
        self.trsm_flops += other.trsm_flops;
        self.reduction_flops += other.reduction_flops;
    }
}
