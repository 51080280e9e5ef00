use std::fmt;
use std::str::FromStr;

pub const DEFAULT_K_GRID: [u32; 7] = [32, 64, 128, 256, 512, 1024, 2000];

/// Strictly increasing list of cluster counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KGrid(Vec<u32>);

impl KGrid {
    pub fn new(values: Vec<u32>) -> Result<Self, String> {
        if values.is_empty() {
            return Err("K grid is empty".into());
        }
        if values[0] == 0 {
            return Err("K values must be positive".into());
        }
        if let Some(w) = values.windows(2).find(|w| w[0] >= w[1]) {
            return Err(format!("K grid must be strictly increasing ({} then {})", w[0], w[1]));
        }
        Ok(KGrid(values))
    }

    pub fn values(&self) -> &[u32] {
        &self.0
    }
}

impl Default for KGrid {
    fn default() -> Self {
        KGrid(DEFAULT_K_GRID.to_vec())
    }
}

impl FromStr for KGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let values = s
            .split(',')
            .map(|v| v.trim().parse::<u32>().map_err(|_| format!("bad K value {v:?}")))
            .collect::<Result<Vec<_>, _>>()?;
        KGrid::new(values)
    }
}

impl fmt::Display for KGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        f.write_str(&parts.join(","))
    }
}
