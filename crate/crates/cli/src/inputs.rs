use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use otlimits::io::{ingest_image, read_mass_file, read_sample_ids, read_space_file, read_tree_csv, GridCounts};
use otlimits::{GridSpace, LimitStructure, Measure, MetricSpace, TestStructure, WeightedTree};

use crate::{warn, StructureArgs};

/// A loaded structure, with a point space that carries the ids used to
/// look up measures and samples.
pub enum Structure {
    Space { space: MetricSpace, mass: Option<Vec<f64>> },
    Tree { ids: MetricSpace, tree: WeightedTree },
    Grid { ids: MetricSpace, grid: GridSpace },
}

impl Structure {
    pub fn load(args: &StructureArgs) -> Result<Self> {
        if let Some(path) = &args.space {
            let file = read_space_file(path).with_context(|| format!("reading space {}", path.display()))?;
            return Ok(Structure::Space { space: file.space, mass: file.mass });
        }
        if let Some(path) = &args.tree {
            let (ids, tree) = read_tree_csv(open(path)?).with_context(|| format!("reading tree {}", path.display()))?;
            let ids = tree.metric_space()?.with_ids(ids)?;
            return Ok(Structure::Tree { ids, tree });
        }
        if let Some(side) = args.grid_side {
            let grid = GridSpace::new(args.grid_dim, side)?;
            return Ok(Structure::Grid { ids: grid.to_space(), grid });
        }
        bail!(otlimits::OtError::InvalidArgument("one of --space, --tree or --grid-side is required".into()))
    }

    pub fn from_grid(grid: GridSpace) -> Self {
        Structure::Grid { ids: grid.to_space(), grid }
    }

    /// The ground metric space (for a tree: the tree metric).
    pub fn space(&self) -> &MetricSpace {
        match self {
            Structure::Space { space, .. } => space,
            Structure::Tree { ids, .. } | Structure::Grid { ids, .. } => ids,
        }
    }

    pub fn test_structure(&self) -> TestStructure<'_> {
        match self {
            Structure::Space { space, .. } => TestStructure::Space(space),
            Structure::Tree { tree, .. } => TestStructure::Tree(tree),
            Structure::Grid { grid, .. } => TestStructure::Grid(grid),
        }
    }

    pub fn limit_structure(&self) -> LimitStructure<'_> {
        match self {
            Structure::Space { space, .. } => LimitStructure::Space(space),
            Structure::Tree { tree, .. } => LimitStructure::Tree(tree),
            Structure::Grid { grid, .. } => LimitStructure::Grid(grid),
        }
    }

    /// A probability measure from a mass file, or from the masses column of
    /// the points file when `path` is `None`.
    pub fn measure(&self, path: Option<&Path>, what: &str) -> Result<Measure> {
        match (path, self) {
            (Some(path), _) => {
                let table = read_mass_file(path).with_context(|| format!("reading {what} from {}", path.display()))?;
                Ok(table.on_space(self.space(), true).with_context(|| format!("{what} from {}", path.display()))?)
            }
            (None, Structure::Space { mass: Some(mass), .. }) => {
                Ok(Measure::probability(mass.clone()).with_context(|| format!("{what} from the points file"))?)
            }
            (None, _) => bail!(otlimits::OtError::InvalidArgument(format!("a measure file for {what} is required"))),
        }
    }

    /// Per-point counts from a file of observed point ids.
    pub fn sample_counts(&self, path: &Path) -> Result<Vec<u64>> {
        read_sample_ids(open(path)?, self.space()).with_context(|| format!("reading sample {}", path.display()))
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

/// Reads an image as grid counts, warning when it had to be padded.
pub fn image(path: &Path) -> Result<GridCounts> {
    let counts = ingest_image(path).with_context(|| format!("reading image {}", path.display()))?;
    if let Some((w, h)) = counts.padded_from {
        let side = counts.grid.side();
        warn(&format!("{}: {w}x{h} image padded with zero counts to {side}x{side}", path.display()));
    }
    Ok(counts)
}

/// Two images on the same grid.
pub fn image_pair(x: &Path, y: &Path) -> Result<(GridSpace, Vec<u64>, Vec<u64>)> {
    let a = image(x)?;
    let b = image(y)?;
    if a.grid.side() != b.grid.side() {
        bail!(otlimits::OtError::InvalidGrid(format!(
            "images live on different grids ({} and {} points per side)",
            a.grid.side(),
            b.grid.side()
        )));
    }
    Ok((a.grid, a.counts, b.counts))
}

/// Parses a threshold such as `0.02` or `5/256`.
pub fn parse_threshold(text: &str) -> std::result::Result<f64, String> {
    let value = match text.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad numerator in {text:?}"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad denominator in {text:?}"))?;
            a / b
        }
        None => text.trim().parse().map_err(|_| format!("not a number: {text:?}"))?,
    };
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(format!("threshold must be positive: {text:?}"))
    }
}
