//! Long-format CSV reader and writer.
//!
//! One row per alternative. Required columns (names configurable through
//! [`ColumnSchema`]): `resp_id, task, alt_k, alt_l, available, chosen`, the
//! respondent-level columns `income_band, owner, license, female, age_band,
//! children, degree, ridehail`, plus any number of attribute columns prefixed
//! `h_` (housing) or `m_` (mode). Empty attribute cells mean "not defined for
//! this alternative" (congestion for public transit, for instance).
//!
//! Rows with `available = 0` are accepted but dropped; a chosen unavailable
//! row is an error. Row numbers in errors are 1-based file lines (the header
//! is line 1).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use super::{
    encode_income, AgeBand, Alternative, ChoiceDataset, ChoiceTask, DatasetError, Mode, Respondent,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSchema {
    pub respondent: String,
    pub task: String,
    pub housing_option: String,
    pub mode: String,
    pub available: String,
    pub chosen: String,
    pub income_band: String,
    pub owner: String,
    pub license: String,
    pub female: String,
    pub age_band: String,
    pub children: String,
    pub degree: String,
    pub ridehail: String,
    pub housing_prefix: String,
    pub mode_prefix: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema {
            respondent: "resp_id".into(),
            task: "task".into(),
            housing_option: "alt_k".into(),
            mode: "alt_l".into(),
            available: "available".into(),
            chosen: "chosen".into(),
            income_band: "income_band".into(),
            owner: "owner".into(),
            license: "license".into(),
            female: "female".into(),
            age_band: "age_band".into(),
            children: "children".into(),
            degree: "degree".into(),
            ridehail: "ridehail".into(),
            housing_prefix: "h_".into(),
            mode_prefix: "m_".into(),
        }
    }
}

struct Columns {
    respondent: usize,
    task: usize,
    housing_option: usize,
    mode: usize,
    available: usize,
    chosen: usize,
    respondent_cols: [usize; 8],
    housing_attrs: Vec<(usize, String)>,
    mode_attrs: Vec<(usize, String)>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, schema: &ColumnSchema) -> Result<Self, DatasetError> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DatasetError::MissingColumn { column: name.to_string(), row: 1 })
        };
        let respondent = find(&schema.respondent)?;
        let task = find(&schema.task)?;
        let housing_option = find(&schema.housing_option)?;
        let mode = find(&schema.mode)?;
        let available = find(&schema.available)?;
        let chosen = find(&schema.chosen)?;
        let respondent_cols = [
            find(&schema.income_band)?,
            find(&schema.owner)?,
            find(&schema.license)?,
            find(&schema.female)?,
            find(&schema.age_band)?,
            find(&schema.children)?,
            find(&schema.degree)?,
            find(&schema.ridehail)?,
        ];
        let mut housing_attrs = Vec::new();
        let mut mode_attrs = Vec::new();
        for (i, h) in headers.iter().enumerate() {
            if h.starts_with(&schema.housing_prefix) {
                housing_attrs.push((i, h.to_string()));
            } else if h.starts_with(&schema.mode_prefix) {
                mode_attrs.push((i, h.to_string()));
            }
        }
        Ok(Columns {
            respondent,
            task,
            housing_option,
            mode,
            available,
            chosen,
            respondent_cols,
            housing_attrs,
            mode_attrs,
        })
    }
}

fn parse_bool(column: &str, value: &str, row: usize) -> Result<bool, DatasetError> {
    match value.trim() {
        "1" | "true" | "TRUE" | "True" => Ok(true),
        "0" | "false" | "FALSE" | "False" => Ok(false),
        _ => Err(invalid(column, value, row)),
    }
}

fn invalid(column: &str, value: &str, row: usize) -> DatasetError {
    DatasetError::InvalidValue { column: column.to_string(), value: value.to_string(), row }
}

fn parse_respondent(
    id: &str,
    rec: &csv::StringRecord,
    cols: &Columns,
    schema: &ColumnSchema,
    row: usize,
) -> Result<Respondent, DatasetError> {
    let field = |i: usize| rec.get(cols.respondent_cols[i]).unwrap_or("").trim();
    if (0..8).all(|i| field(i).is_empty()) {
        return Err(DatasetError::DanglingRespondent { respondent: id.to_string(), row });
    }
    let band_str = field(0);
    let income_band: u8 = band_str.parse().map_err(|_| invalid(&schema.income_band, band_str, row))?;
    let weekly_household_income = encode_income(income_band)?;
    let age_str = field(4);
    Ok(Respondent {
        id: id.to_string(),
        income_band,
        weekly_household_income,
        is_owner: parse_bool(&schema.owner, field(1), row)?,
        has_license: parse_bool(&schema.license, field(2), row)?,
        female: parse_bool(&schema.female, field(3), row)?,
        age_band: AgeBand::parse(age_str).ok_or_else(|| invalid(&schema.age_band, age_str, row))?,
        children_present: parse_bool(&schema.children, field(5), row)?,
        degree_holder: parse_bool(&schema.degree, field(6), row)?,
        ridehail_user: parse_bool(&schema.ridehail, field(7), row)?,
    })
}

struct OpenTask {
    respondent: usize,
    task_index: u32,
    first_row: usize,
    alternatives: Vec<Alternative>,
    chosen: Vec<usize>,
}

/// Reads and validates a long-format choice file.
pub fn load_choice_data(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<ChoiceDataset, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    read_choice_data(file, schema, path.display().to_string())
}

pub fn read_choice_data<R: std::io::Read>(
    reader: R,
    schema: &ColumnSchema,
    provenance: String,
) -> Result<ChoiceDataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| DatasetError::Csv(e.to_string()))?.clone();
    let cols = Columns::resolve(&headers, schema)?;

    let mut respondents: Vec<Respondent> = Vec::new();
    let mut resp_index: HashMap<String, usize> = HashMap::new();
    let mut availability: Vec<Option<BTreeSet<(u8, Mode)>>> = Vec::new();
    let mut closed: BTreeSet<(usize, u32)> = BTreeSet::new();
    let mut finished: BTreeSet<usize> = BTreeSet::new();
    let mut tasks: Vec<ChoiceTask> = Vec::new();
    let mut open: Option<OpenTask> = None;

    let close = |t: OpenTask,
                 respondents: &[Respondent],
                 availability: &mut Vec<Option<BTreeSet<(u8, Mode)>>>,
                 tasks: &mut Vec<ChoiceTask>|
     -> Result<(), DatasetError> {
        if t.chosen.len() != 1 {
            return Err(DatasetError::ChosenCount { row: t.first_row, count: t.chosen.len() });
        }
        let set: BTreeSet<(u8, Mode)> = t.alternatives.iter().map(Alternative::tuple).collect();
        let resp = &respondents[t.respondent];
        match &availability[t.respondent] {
            None => availability[t.respondent] = Some(set),
            Some(prev) if *prev != set => {
                return Err(DatasetError::InconsistentAvailability {
                    respondent: resp.id.clone(),
                    row: t.first_row,
                })
            }
            _ => {}
        }
        let expected = tasks
            .last()
            .filter(|last| last.respondent_id == resp.id)
            .map_or(1, |last| last.task_index + 1);
        if t.task_index != expected {
            return Err(DatasetError::NonContiguousTask {
                respondent: resp.id.clone(),
                task: t.task_index,
                row: t.first_row,
            });
        }
        tasks.push(ChoiceTask {
            respondent_id: resp.id.clone(),
            task_index: t.task_index,
            alternatives: t.alternatives,
            chosen: t.chosen[0],
        });
        Ok(())
    };

    for rec in rdr.records() {
        let rec = rec.map_err(|e| DatasetError::Csv(e.to_string()))?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let get = |i: usize| rec.get(i).unwrap_or("").trim();

        let id = get(cols.respondent).to_string();
        if id.is_empty() {
            return Err(invalid(&schema.respondent, "", row));
        }
        let task_index: u32 = get(cols.task).parse().map_err(|_| invalid(&schema.task, get(cols.task), row))?;
        let housing: u8 = get(cols.housing_option)
            .parse()
            .ok()
            .filter(|k| (1..=2).contains(k))
            .ok_or_else(|| invalid(&schema.housing_option, get(cols.housing_option), row))?;
        let mode = get(cols.mode)
            .parse::<u8>()
            .ok()
            .and_then(Mode::from_index)
            .ok_or_else(|| invalid(&schema.mode, get(cols.mode), row))?;
        let available = parse_bool(&schema.available, get(cols.available), row)?;
        let chosen = parse_bool(&schema.chosen, get(cols.chosen), row)?;

        let resp_idx = match resp_index.get(&id) {
            Some(&i) => {
                let again = parse_respondent(&id, &rec, &cols, schema, row)?;
                if again != respondents[i] {
                    return Err(DatasetError::InconsistentRespondent { respondent: id, row });
                }
                i
            }
            None => {
                let r = parse_respondent(&id, &rec, &cols, schema, row)?;
                respondents.push(r);
                availability.push(None);
                resp_index.insert(id.clone(), respondents.len() - 1);
                respondents.len() - 1
            }
        };

        let same_task = open.as_ref().is_some_and(|t| t.respondent == resp_idx && t.task_index == task_index);
        if !same_task {
            if let Some(t) = open.take() {
                if t.respondent != resp_idx {
                    finished.insert(t.respondent);
                }
                closed.insert((t.respondent, t.task_index));
                close(t, &respondents, &mut availability, &mut tasks)?;
            }
            if closed.contains(&(resp_idx, task_index)) || finished.contains(&resp_idx) {
                return Err(DatasetError::NonContiguousTask { respondent: id, task: task_index, row });
            }
            open = Some(OpenTask {
                respondent: resp_idx,
                task_index,
                first_row: row,
                alternatives: Vec::new(),
                chosen: Vec::new(),
            });
        }
        let task = open.as_mut().expect("open task");

        if !available {
            if chosen {
                return Err(DatasetError::ChosenUnavailable { row });
            }
            continue;
        }
        if !respondents[resp_idx].has_license && mode == Mode::ConventionalCar {
            return Err(DatasetError::UnlicensedCarAvailable { row });
        }
        let read_attrs = |list: &[(usize, String)]| -> Result<BTreeMap<String, f64>, DatasetError> {
            let mut m = BTreeMap::new();
            for (i, name) in list {
                let v = get(*i);
                if v.is_empty() {
                    continue;
                }
                let x: f64 = v.parse().map_err(|_| invalid(name, v, row))?;
                if !x.is_finite() {
                    return Err(invalid(name, v, row));
                }
                m.insert(name.clone(), x);
            }
            Ok(m)
        };
        if chosen {
            task.chosen.push(task.alternatives.len());
        }
        task.alternatives.push(Alternative {
            housing,
            mode,
            housing_attrs: read_attrs(&cols.housing_attrs)?,
            mode_attrs: read_attrs(&cols.mode_attrs)?,
        });
    }
    if let Some(t) = open.take() {
        close(t, &respondents, &mut availability, &mut tasks)?;
    }
    ChoiceDataset::new(respondents, tasks, provenance)
}

/// Writes a dataset in the canonical long format. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_choice_data(dataset: &ChoiceDataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    write_choice_data_to(dataset, file)
}

pub fn write_choice_data_to<W: std::io::Write>(dataset: &ChoiceDataset, writer: W) -> Result<(), DatasetError> {
    let schema = ColumnSchema::default();
    let mut h_cols = BTreeSet::new();
    let mut m_cols = BTreeSet::new();
    for t in &dataset.tasks {
        for a in &t.alternatives {
            h_cols.extend(a.housing_attrs.keys().cloned());
            m_cols.extend(a.mode_attrs.keys().cloned());
        }
    }
    let resp_by_id: HashMap<&str, &Respondent> = dataset.respondents.iter().map(|r| (r.id.as_str(), r)).collect();
    let csv_err = |e: csv::Error| DatasetError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(writer);

    let mut header: Vec<String> = vec![
        schema.respondent.clone(),
        schema.task.clone(),
        schema.housing_option.clone(),
        schema.mode.clone(),
        schema.available.clone(),
        schema.chosen.clone(),
    ];
    header.extend(h_cols.iter().cloned());
    header.extend(m_cols.iter().cloned());
    header.extend([
        schema.income_band,
        schema.owner,
        schema.license,
        schema.female,
        schema.age_band,
        schema.children,
        schema.degree,
        schema.ridehail,
    ]);
    w.write_record(&header).map_err(csv_err)?;

    let b = |x: bool| if x { "1".to_string() } else { "0".to_string() };
    for t in &dataset.tasks {
        let r = resp_by_id
            .get(t.respondent_id.as_str())
            .ok_or_else(|| DatasetError::DanglingRespondent { respondent: t.respondent_id.clone(), row: 0 })?;
        for (j, a) in t.alternatives.iter().enumerate() {
            let mut rec: Vec<String> = vec![
                r.id.clone(),
                t.task_index.to_string(),
                a.housing.to_string(),
                a.mode.index().to_string(),
                "1".into(),
                b(j == t.chosen),
            ];
            rec.extend(h_cols.iter().map(|c| a.housing_attrs.get(c).map_or(String::new(), |v| v.to_string())));
            rec.extend(m_cols.iter().map(|c| a.mode_attrs.get(c).map_or(String::new(), |v| v.to_string())));
            rec.extend([
                r.income_band.to_string(),
                b(r.is_owner),
                b(r.has_license),
                b(r.female),
                r.age_band.as_str().to_string(),
                b(r.children_present),
                b(r.degree_holder),
                b(r.ridehail_user),
            ]);
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| DatasetError::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "resp_id,task,alt_k,alt_l,available,chosen,h_cost,m_time,income_band,owner,license,female,age_band,children,degree,ridehail\n";

    fn read(body: &str) -> Result<ChoiceDataset, DatasetError> {
        read_choice_data(format!("{HEADER}{body}").as_bytes(), &ColumnSchema::default(), "test".into())
    }

    #[test]
    fn minimal_file_loads() {
        let ds = read(
            "r1,1,1,2,1,0,300,0.5,5,1,1,0,30-49,0,1,0\n\
             r1,1,1,3,1,1,300,0.7,5,1,1,0,30-49,0,1,0\n",
        )
        .unwrap();
        assert_eq!(ds.n_respondents(), 1);
        assert_eq!(ds.n_tasks(), 1);
        assert_eq!(ds.tasks[0].alternatives.len(), 2);
        assert_eq!(ds.tasks[0].chosen, 1);
        assert_eq!(ds.respondents[0].weekly_household_income, 1200.0);
        assert_eq!(ds.tasks[0].alternatives[1].mode_attrs["m_time"], 0.7);
    }

    #[test]
    fn chosen_unavailable_row_is_reported() {
        let err = read(
            "r1,1,1,2,1,0,300,0.5,5,1,1,0,30-49,0,1,0\n\
             r1,1,1,3,0,1,300,0.7,5,1,1,0,30-49,0,1,0\n",
        )
        .unwrap_err();
        assert_eq!(err, DatasetError::ChosenUnavailable { row: 3 });
    }

    #[test]
    fn missing_column_is_named() {
        let err = read_choice_data(
            "resp_id,task,alt_k,alt_l,available\nr1,1,1,2,1\n".as_bytes(),
            &ColumnSchema::default(),
            String::new(),
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::MissingColumn { ref column, row: 1 } if column == "chosen"));
    }

    #[test]
    fn blank_respondent_record_is_dangling() {
        let err = read("r1,1,1,2,1,1,300,0.5,,,,,,,,\n").unwrap_err();
        assert_eq!(err, DatasetError::DanglingRespondent { respondent: "r1".into(), row: 2 });
    }

    #[test]
    fn task_gap_and_interleaving_are_rejected() {
        let gap = read(
            "r1,1,1,2,1,1,300,0.5,5,1,1,0,30-49,0,1,0\n\
             r1,3,1,2,1,1,300,0.5,5,1,1,0,30-49,0,1,0\n",
        );
        assert!(matches!(gap, Err(DatasetError::NonContiguousTask { task: 3, row: 3, .. })));
        let split = read(
            "r1,1,1,2,1,1,300,0.5,5,1,1,0,30-49,0,1,0\n\
             r1,2,1,2,1,1,300,0.5,5,1,1,0,30-49,0,1,0\n\
             r1,1,1,3,1,0,300,0.5,5,1,1,0,30-49,0,1,0\n",
        );
        assert!(matches!(split, Err(DatasetError::NonContiguousTask { row: 4, .. })));
        let interleaved = read(
            "r1,1,1,2,1,1,300,0.5,5,1,1,0,30-49,0,1,0\n\
             r2,1,1,2,1,1,300,0.5,5,1,1,0,30-49,0,1,0\n\
             r1,2,1,2,1,1,300,0.5,5,1,1,0,30-49,0,1,0\n",
        );
        assert!(matches!(interleaved, Err(DatasetError::NonContiguousTask { row: 4, .. })));
    }

    #[test]
    fn conflicting_respondent_values_are_rejected() {
        let err = read(
            "r1,1,1,2,1,1,300,0.5,5,1,1,0,30-49,0,1,0\n\
             r1,1,1,3,1,0,300,0.5,6,1,1,0,30-49,0,1,0\n",
        )
        .unwrap_err();
        assert!(matches!(err, DatasetError::InconsistentRespondent { row: 3, .. }));
    }

    #[test]
    fn write_then_read_is_identity() {
        let ds = read(
            "r1,1,1,2,1,0,300.25,0.5,12,1,1,0,50+,0,1,0\n\
             r1,1,2,3,1,1,299.1,,12,1,1,0,50+,0,1,0\n\
             r1,2,1,2,1,1,310,0.1,12,1,1,0,50+,0,1,0\n\
             r1,2,2,3,1,0,280,0.3333333333333333,12,1,1,0,50+,0,1,0\n",
        )
        .unwrap();
        let mut buf = Vec::new();
        write_choice_data_to(&ds, &mut buf).unwrap();
        let back = read_choice_data(buf.as_slice(), &ColumnSchema::default(), "test".into()).unwrap();
        assert_eq!(back, ds);
    }
}
