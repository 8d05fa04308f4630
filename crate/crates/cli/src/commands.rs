use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use shape_currents::dataset::Dataset;
use shape_currents::io::{write_csv_polyline, write_off};
use shape_currents::manifest::RunManifest;
use shape_currents::sizing::{build_sizing, parse_bands, LambdaChoice, SizingMode, SizingOptions};
use shape_currents::{
    adjusted_rand_index, build_scenario, curve_to_atoms, gram_matrix, kernel_kmeans, lambda_heuristic,
    load_shape, mesh_to_atoms, silhouette, sweep_k, Geometry, GramMatrix, Init, KMeansOptions, KernelConfig,
    LambdaHeuristic, Polyline2D, ScenarioSpec, ShapeAtoms, ShapeFormat, GRAM_MAGIC,
};

use crate::{
    ClusterArgs, Failure, GramArgs, IngestArgs, KMeansArgs, SizingArgs, SweepArgs, SynthArgs, ValidateArgs,
};

type Outcome = Result<(), Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| invalid(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &Value) -> Outcome {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialise") + "\n";
    write_file(path, text)
}

/// `out.csv` -> `out.csv.manifest.json`, for outputs that cannot embed one.
fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// λ recorded in the manifest written next to a Gram file, if any.
fn sidecar_lambda(gram_path: &Path) -> Option<f64> {
    let text = fs::read_to_string(sidecar(gram_path)).ok()?;
    serde_json::from_str::<Value>(&text).ok()?.get("lambda")?.as_f64()
}

fn read_gram(path: &Path) -> Result<GramMatrix, Failure> {
    let bytes = fs::read(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let gram = if bytes.starts_with(GRAM_MAGIC) {
        GramMatrix::from_bytes(&bytes)?
    } else {
        let text = String::from_utf8(bytes).map_err(|_| invalid(format!("{}: not UTF-8 CSV", path.display())))?;
        GramMatrix::from_csv(&text)?
    };
    Ok(gram)
}

fn kmeans_options(a: &KMeansArgs) -> Result<KMeansOptions, Failure> {
    let init = match a.init.as_str() {
        "kmeans++" => Init::KMeansPlusPlus,
        "random" => Init::Random,
        other => return Err(invalid(format!("unknown --init {other:?}; expected kmeans++ or random"))),
    };
    if a.restarts == 0 {
        return Err(invalid("--restarts must be at least 1"));
    }
    if a.tol.is_nan() || a.tol < 0.0 {
        return Err(invalid("--tol must be non-negative"));
    }
    Ok(KMeansOptions {
        seed: a.seed,
        init,
        max_iter: a.max_iter,
        restarts: a.restarts,
        tol: a.tol,
    })
}

fn kmeans_json(o: &KMeansOptions) -> Value {
    json!({
        "init": o.init.name(),
        "restarts": o.restarts,
        "max_iter": o.max_iter,
        "tol": o.tol,
    })
}

/// Planted labels from a bundle, reordered to match the Gram's shape ids.
/// Binary Grams carry no ids; their positional ids match the bundle by order.
fn truth_for(gram: &GramMatrix, bundle: &Path) -> Result<Vec<usize>, Failure> {
    let ds = Dataset::read(bundle)?;
    let positional = gram.shape_ids().iter().enumerate().all(|(i, id)| *id == i.to_string());
    if positional && ds.len() == gram.size() && !gram.shape_ids().iter().all(|id| ds.ids.contains(id)) {
        return ds
            .truth()
            .ok_or_else(|| invalid(format!("{} lacks true labels for some shapes", bundle.display())));
    }
    let by_id: HashMap<&str, Option<usize>> =
        ds.ids.iter().map(String::as_str).zip(ds.true_labels.iter().copied()).collect();
    gram.shape_ids()
        .iter()
        .map(|id| match by_id.get(id.as_str()) {
            Some(Some(label)) => Ok(*label),
            Some(None) => Err(invalid(format!("shape {id:?} has no true_label in {}", bundle.display()))),
            None => Err(invalid(format!("shape {id:?} is not in {}", bundle.display()))),
        })
        .collect()
}

// ---------------------------------------------------------------- ingest

const SHAPE_EXTENSIONS: [&str; 4] = ["csv", "json", "off", "obj"];

fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| invalid(format!("{}: {e}", input.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| {
                    p.is_file()
                        && p.extension()
                            .and_then(|e| e.to_str())
                            .is_some_and(|e| SHAPE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(shape_currents::Error::EmptyInput.into());
    }
    Ok(files)
}

#[derive(Default)]
struct MetaRow {
    label: Option<String>,
    true_label: Option<usize>,
    values: BTreeMap<String, f64>,
}

fn read_meta(path: &Path) -> Result<HashMap<String, MetaRow>, Failure> {
    let fail = |msg: String| invalid(format!("{}: {msg}", path.display()));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| fail(e.to_string()))?;
    let headers = reader.headers().map_err(|e| fail(e.to_string()))?.clone();
    let id_col = headers.iter().position(|h| h == "id").ok_or_else(|| fail("missing id column".into()))?;
    let mut rows = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = MetaRow::default();
        for (col, (name, field)) in headers.iter().zip(record.iter()).enumerate() {
            if col == id_col || field.is_empty() {
                continue;
            }
            match name {
                "label" => row.label = Some(field.to_string()),
                "true_label" => {
                    row.true_label = Some(field.parse().map_err(|_| fail(format!("line {line}: bad true_label {field:?}")))?)
                }
                _ => {
                    let v: f64 = field.parse().map_err(|_| fail(format!("line {line}: {name} = {field:?} is not a number")))?;
                    row.values.insert(name.to_string(), v);
                }
            }
        }
        let id = record[id_col].to_string();
        if rows.insert(id.clone(), row).is_some() {
            return Err(fail(format!("duplicate id {id:?}")));
        }
    }
    Ok(rows)
}

fn to_atoms(geometry: Geometry, close: bool) -> shape_currents::Result<ShapeAtoms> {
    match geometry {
        Geometry::Polyline(p) if close && !p.is_closed() => curve_to_atoms(&Polyline2D::new(p.points().to_vec(), true)?),
        Geometry::Polyline(p) => curve_to_atoms(&p),
        Geometry::Mesh(m) => mesh_to_atoms(&m),
    }
}

pub fn ingest(a: &IngestArgs) -> Outcome {
    let forced = a.format.as_deref().map(str::parse::<ShapeFormat>).transpose()?;
    let files = expand_inputs(&a.inputs)?;
    let mut meta = match &a.meta {
        Some(path) => read_meta(path)?,
        None => HashMap::new(),
    };
    let mut entries = Vec::new();
    let mut errors = Vec::new();
    for file in &files {
        let id = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let loaded = forced
            .or_else(|| ShapeFormat::from_path(file))
            .ok_or_else(|| shape_currents::Error::UnsupportedFormat(file.display().to_string()))
            .and_then(|format| load_shape(file, format))
            .and_then(|g| to_atoms(g, a.close));
        match loaded {
            Ok(mut atoms) => {
                let row = meta.remove(&id).unwrap_or_default();
                if let Some(label) = row.label {
                    atoms = atoms.with_label(label);
                }
                entries.push((id, row.true_label, atoms.with_meta_map(row.values)));
            }
            Err(e) => errors.push(format!("{}: {e}", file.display())),
        }
    }
    if !errors.is_empty() {
        return Err(invalid(format!("{} of {} inputs failed:\n  {}", errors.len(), files.len(), errors.join("\n  "))));
    }
    if let Some(orphan) = meta.keys().min() {
        return Err(invalid(format!("metadata row {orphan:?} matches no input file")));
    }
    let ds = Dataset::new(entries)?;
    let mut manifest = RunManifest::new("ingest");
    for input in &a.inputs {
        manifest = manifest.with_input(input)?;
    }
    if let Some(path) = &a.meta {
        manifest = manifest.with_input(path)?;
    }
    let manifest = manifest.with_options(json!({ "format": a.format, "close": a.close }));
    ds.write(&a.out, Some(manifest.to_value()))?;
    println!("wrote {} shapes ({}D) to {}", ds.len(), ds.dim, a.out.display());
    Ok(())
}

// ---------------------------------------------------------------- gram

pub fn gram(a: &GramArgs) -> Outcome {
    let ds = Dataset::read(&a.dataset)?;
    let (lambda, source) = match a.lambda {
        Some(l) => (l, "given".to_string()),
        None => {
            let mode: LambdaHeuristic = a.lambda_mode.parse()?;
            (lambda_heuristic(&ds.shapes, mode)?, format!("auto-{}", a.lambda_mode))
        }
    };
    let mut cfg = KernelConfig::new(lambda, ds.dim)?;
    if let Some(r) = a.cutoff {
        cfg = cfg.with_approximate_cutoff(r)?;
    }
    let binary = match a.format.as_deref() {
        Some("bin") => true,
        Some("csv") => false,
        Some(other) => return Err(invalid(format!("unknown --format {other:?}; expected csv or bin"))),
        None => a.out.extension().is_some_and(|e| e == "bin"),
    };
    let gram = gram_matrix(&ds.shapes, &cfg)?.with_shape_ids(ds.ids.clone())?;
    let mut options = json!({ "format": if binary { "bin" } else { "csv" }, "cutoff": a.cutoff });
    if a.check {
        let spectrum = gram.validate()?;
        options["min_eigenvalue"] = json!(spectrum.min_eigenvalue);
        options["max_eigenvalue"] = json!(spectrum.max_eigenvalue);
    }
    let manifest = RunManifest::new("gram")
        .with_input(&a.dataset)?
        .with_lambda(lambda, &source)
        .with_options(options)
        .to_value();
    if binary {
        write_file(&a.out, gram.to_bytes())?;
    } else {
        write_file(&a.out, gram.to_csv())?;
    }
    write_json(&sidecar(&a.out), &manifest)?;
    println!("lambda = {lambda:?} ({source})");
    println!("{}", serde_json::to_string_pretty(&manifest).expect("manifest serialises"));
    Ok(())
}

// ---------------------------------------------------------------- cluster

pub fn cluster(a: &ClusterArgs) -> Outcome {
    let gram = read_gram(&a.gram)?;
    let mut opts = kmeans_options(&a.kmeans)?;
    let mut manifest = RunManifest::new("cluster").with_input(&a.gram)?;
    if let Some(path) = &a.init_assignment {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let given: Vec<usize> =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        opts.init = Init::Provided(given);
        manifest = manifest.with_input(path)?;
    }
    let truth = a.truth.as_deref().map(|t| truth_for(&gram, t)).transpose()?;
    if let Some(t) = &a.truth {
        manifest = manifest.with_input(t)?;
    }
    let model = kernel_kmeans(&gram, a.k, &opts)?;
    let mut out = serde_json::to_value(&model).expect("model serialises");
    out["shape_ids"] = json!(gram.shape_ids());
    if let Some(truth) = &truth {
        out["ari"] = json!(adjusted_rand_index(&model.assignment, truth)?);
    }
    if let Some(lambda) = gram.lambda().or_else(|| sidecar_lambda(&a.gram)) {
        manifest = manifest.with_lambda(lambda, "gram");
    }
    out["manifest"] = manifest
        .with_seed(opts.seed)
        .with_options(json!({ "k": a.k, "kmeans": kmeans_json(&opts) }))
        .to_value();
    write_json(&a.out, &out)?;
    println!("W = {:?} after {} iterations", model.objective(), model.iterations);
    if let Some(ari) = out.get("ari") {
        println!("ARI = {ari}");
    }
    if model.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!("no fixed point within {} iterations", opts.max_iter)))
    }
}

// ---------------------------------------------------------------- validate

pub fn validate(a: &ValidateArgs) -> Outcome {
    let gram = read_gram(&a.gram)?;
    let text = fs::read_to_string(&a.assignment).map_err(|e| invalid(format!("{}: {e}", a.assignment.display())))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", a.assignment.display())))?;
    let assignment: Vec<usize> = serde_json::from_value(doc.get("assignment").cloned().unwrap_or(doc))
        .map_err(|e| invalid(format!("{}: {e}", a.assignment.display())))?;
    let report = silhouette(&gram, &assignment)?;
    let mut out = serde_json::to_value(&report).expect("report serialises");
    let mut manifest = RunManifest::new("validate").with_input(&a.gram)?.with_input(&a.assignment)?;
    if let Some(t) = &a.truth {
        out["ari"] = json!(adjusted_rand_index(&assignment, &truth_for(&gram, t)?)?);
        manifest = manifest.with_input(t)?;
    }
    out["manifest"] = manifest.to_value();
    write_json(&a.out, &out)?;
    println!("mean silhouette = {:?}, W = {:?}", report.mean_silhouette, report.w);
    Ok(())
}

// ---------------------------------------------------------------- sweep

pub fn sweep(a: &SweepArgs) -> Outcome {
    if a.k_min == 0 || a.k_min > a.k_max {
        return Err(invalid(format!("need 1 <= --k-min <= --k-max, got {}..{}", a.k_min, a.k_max)));
    }
    let gram = read_gram(&a.gram)?;
    let opts = kmeans_options(&a.kmeans)?;
    let rows = sweep_k(&gram, a.k_min..=a.k_max, &opts)?;
    let mut csv = String::from("k,W,silhouette\n");
    for row in &rows {
        let s = row.mean_silhouette.map(|s| format!("{s:?}")).unwrap_or_default();
        csv.push_str(&format!("{},{:?},{s}\n", row.k, row.w));
    }
    write_file(&a.out, &csv)?;
    let manifest = RunManifest::new("sweep")
        .with_input(&a.gram)?
        .with_seed(opts.seed)
        .with_options(json!({ "k_min": a.k_min, "k_max": a.k_max, "kmeans": kmeans_json(&opts) }));
    write_json(&sidecar(&a.out), &manifest.to_value())?;
    print!("{csv}");
    match rows.iter().find(|r| !r.converged) {
        Some(r) => Err(Failure::NotConverged(format!("k = {} hit the iteration limit", r.k))),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------- sizing

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

pub fn sizing(a: &SizingArgs) -> Outcome {
    let ds = Dataset::read(&a.dataset)?;
    let mode = match (&a.bands, a.k) {
        (Some(bands), _) => SizingMode::Banded {
            band_key: a.band_key.clone(),
            bands: parse_bands(bands)?,
            k_per_band: a.k_per_band,
        },
        (None, Some(k)) => SizingMode::Pooled {
            k,
            sort_key: a.sort_key.clone(),
        },
        (None, None) => return Err(invalid("--pooled needs --k")),
    };
    let lambda = match a.lambda {
        Some(l) => LambdaChoice::Fixed(l),
        None => LambdaChoice::Auto(a.lambda_mode.parse()?),
    };
    let opts = SizingOptions {
        mode,
        lambda,
        kmeans: kmeans_options(&a.kmeans)?,
    };
    let report = build_sizing(&ds, &opts)?;
    let (json_path, csv_path, long_path) =
        (with_suffix(&a.out, ".json"), with_suffix(&a.out, ".csv"), with_suffix(&a.out, ".long.csv"));
    let manifest = RunManifest::new("sizing")
        .with_input(&a.dataset)?
        .with_seed(opts.kmeans.seed)
        .with_options(json!({
            "mode": report.mode,
            "bands": a.bands,
            "band_key": a.band_key,
            "k_per_band": a.k_per_band,
            "k": a.k,
            "sort_key": a.sort_key,
            "lambda": a.lambda,
            "lambda_mode": a.lambda_mode,
            "kmeans": kmeans_json(&opts.kmeans),
            "tables": [csv_path.display().to_string(), long_path.display().to_string()],
        }));
    let mut out = serde_json::to_value(&report).expect("report serialises");
    out["manifest"] = manifest.to_value();
    write_json(&json_path, &out)?;
    write_file(&csv_path, report.to_csv())?;
    write_file(&long_path, report.to_long_csv(&ds))?;
    print!("{}", report.to_csv());
    Ok(())
}

// ---------------------------------------------------------------- synth

pub fn synth(a: &SynthArgs) -> Outcome {
    let text = fs::read_to_string(&a.spec).map_err(|e| invalid(format!("{}: {e}", a.spec.display())))?;
    let spec: ScenarioSpec = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", a.spec.display())))?;
    let shapes = build_scenario(&spec)?;
    if a.export_geometry {
        for s in &shapes {
            let (name, body) = match &s.geometry {
                Geometry::Polyline(p) => (format!("{}.csv", s.id), write_csv_polyline(p)),
                Geometry::Mesh(m) => (format!("{}.off", s.id), write_off(m)),
            };
            write_file(&a.out.join("geometry").join(name), body)?;
        }
    }
    let n = shapes.len();
    let ds = Dataset::new(shapes.into_iter().map(|s| (s.id, Some(s.true_label), s.atoms)).collect())?;
    let manifest = RunManifest::new("synth")
        .with_input(&a.spec)?
        .with_seed(spec.seed)
        .with_options(serde_json::to_value(&spec).expect("spec serialises"));
    ds.write(&a.out, Some(manifest.to_value()))?;
    println!("wrote {n} shapes ({}D) to {}", ds.dim, a.out.display());
    Ok(())
}
