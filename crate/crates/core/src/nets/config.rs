#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub d_model: usize,
    pub d_ffn: usize,
    pub n_heads: usize,
    pub rel_pos_max_distance: usize,
    /// Number of pseudo-code classes.
    pub n_codes: usize,
    pub code_embed_dim: usize,
}

impl ArchConfig {
    /// 12-6 layers, 768 wide.
    pub fn base() -> Self {
        Self {
            enc_layers: 12,
            dec_layers: 6,
            d_model: 768,
            d_ffn: 3072,
            n_heads: 12,
            rel_pos_max_distance: 16,
            n_codes: 500,
            code_embed_dim: 256,
        }
    }

    pub fn desk() -> Self {
        Self {
            enc_layers: 2,
            dec_layers: 2,
            d_model: 64,
            d_ffn: 128,
            n_heads: 4,
            rel_pos_max_distance: 16,
            n_codes: 32,
            code_embed_dim: 64,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_codes < 2 {
            return Err(format!("need at least 2 codes, got {}", self.n_codes));
        }
        if self.d_ffn == 0 || self.code_embed_dim == 0 {
            return Err("d_ffn and code_embed_dim must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn code_vocab(&self) -> CodeVocab {
        CodeVocab { n_codes: self.n_codes }
    }
}

/// Decoder vocabulary for code reconstruction: the codes followed by
/// BOS, EOS and PAD.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeVocab {
    pub n_codes: usize,
}

impl CodeVocab {
    pub fn bos(&self) -> usize {
        self.n_codes
    }
    pub fn eos(&self) -> usize {
        self.n_codes + 1
    }
    pub fn pad(&self) -> usize {
        self.n_codes + 2
    }
    pub fn size(&self) -> usize {
        self.n_codes + 3
    }
}
