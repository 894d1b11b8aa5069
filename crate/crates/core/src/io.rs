//! CSV ingestion and emission for the panel inputs.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::codes::State;
use crate::error::{Error, Result};
use crate::panel::{
    CoverageMask, DeflatorSeries, JobYearRecord, MinWageSeries, Panel, PersonRecord,
};

pub const PERSONS_HEADER: [&str; 9] = [
    "person_id",
    "sex",
    "race_eth",
    "foreign_born",
    "birth_year",
    "death_year",
    "ssn_active",
    "education",
    "state",
];
pub const JOBS_HEADER: [&str; 10] = [
    "person_id",
    "employer_id",
    "year",
    "q1",
    "q2",
    "q3",
    "q4",
    "industry_sector",
    "state",
    "hours",
];

/// Reads a headed CSV and hands each row to `f` with a column accessor.
struct Table<'a> {
    name: &'static str,
    cols: HashMap<&'a str, usize>,
}

struct Row<'r> {
    name: &'static str,
    line: usize,
    rec: &'r csv::StringRecord,
    cols: &'r HashMap<&'r str, usize>,
}

impl Row<'_> {
    fn raw(&self, col: &str) -> &str {
        self.rec.get(self.cols[col]).unwrap_or("").trim()
    }

    fn err(&self, col: &str, msg: impl Into<String>) -> Error {
        Error::schema(self.name, self.line, col, msg)
    }

    fn text(&self, col: &str) -> Result<String> {
        let v = self.raw(col);
        if v.is_empty() {
            return Err(self.err(col, "required field is empty"));
        }
        Ok(v.to_string())
    }

    fn parse<T: std::str::FromStr>(&self, col: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(col);
        if v.is_empty() {
            return Err(self.err(col, "required field is empty"));
        }
        v.parse().map_err(|e: T::Err| self.err(col, format!("`{v}`: {e}")))
    }

    fn opt<T: std::str::FromStr>(&self, col: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if self.raw(col).is_empty() {
            Ok(None)
        } else {
            self.parse(col).map(Some)
        }
    }

    fn flag(&self, col: &str) -> Result<bool> {
        match self.raw(col).to_ascii_lowercase().as_str() {
            "1" | "true" | "t" | "yes" | "y" => Ok(true),
            "0" | "false" | "f" | "no" | "n" => Ok(false),
            other => Err(self.err(col, format!("`{other}` is not a boolean"))),
        }
    }

    fn amount(&self, col: &str) -> Result<f64> {
        let v: f64 = self.parse(col)?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(self.err(col, "must be finite and non-negative"));
        }
        Ok(v)
    }
}

fn read_table<R: Read, T>(
    name: &'static str,
    src: R,
    required: &[&str],
    mut f: impl FnMut(&Row<'_>) -> Result<T>,
) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(src);
    let headers = rdr.headers()?.clone();
    let table = Table {
        name,
        cols: headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect(),
    };
    for col in required {
        if !table.cols.contains_key(col) {
            return Err(Error::schema(table.name, 1, *col, "missing column in header"));
        }
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = Row {
            name: table.name,
            line: k + 2,
            rec: &rec,
            cols: &table.cols,
        };
        out.push(f(&row)?);
    }
    Ok(out)
}

pub fn read_persons<R: Read>(src: R) -> Result<Vec<PersonRecord>> {
    read_table("persons", src, &PERSONS_HEADER, |r| {
        Ok(PersonRecord {
            person_id: r.text("person_id")?,
            sex: r.parse("sex")?,
            race_eth: r.parse("race_eth")?,
            foreign_born: r.flag("foreign_born")?,
            birth_year: r.parse("birth_year")?,
            death_year: r.opt("death_year")?,
            ssn_active: r.flag("ssn_active")?,
            education: r.opt("education")?,
            state: r.parse("state")?,
        })
    })
}

pub fn read_jobs<R: Read>(src: R) -> Result<Vec<JobYearRecord>> {
    read_table("jobs", src, &JOBS_HEADER, |r| {
        let hours: Option<f64> = r.opt("hours")?;
        if hours.is_some_and(|h| !(h.is_finite() && h >= 0.0)) {
            return Err(r.err("hours", "must be finite and non-negative"));
        }
        Ok(JobYearRecord {
            person_id: r.text("person_id")?,
            employer_id: r.text("employer_id")?,
            year: r.parse("year")?,
            q_earnings: [r.amount("q1")?, r.amount("q2")?, r.amount("q3")?, r.amount("q4")?],
            industry_sector: r.parse("industry_sector")?,
            state: r.parse("state")?,
            hours,
        })
    })
}

fn read_year_series<R: Read>(
    name: &'static str,
    src: R,
    value_col: &'static str,
) -> Result<BTreeMap<i32, f64>> {
    let pairs = read_table(name, src, &["year", value_col], |r| {
        Ok((r.parse::<i32>("year")?, r.parse::<f64>(value_col)?, r.line))
    })?;
    let mut out = BTreeMap::new();
    for (year, v, line) in pairs {
        if out.insert(year, v).is_some() {
            return Err(Error::schema(name, line, "year", format!("year {year} repeated")));
        }
    }
    Ok(out)
}

pub fn read_deflator<R: Read>(src: R, reference_year: i32) -> Result<DeflatorSeries> {
    DeflatorSeries::new(read_year_series("deflator", src, "index")?, reference_year)
}

pub fn read_min_wage<R: Read>(src: R) -> Result<MinWageSeries> {
    MinWageSeries::new(read_year_series("minwage", src, "min_wage")?)
}

pub fn read_coverage_mask<R: Read>(src: R) -> Result<CoverageMask> {
    let cells = read_table("coverage_mask", src, &["state", "year"], |r| {
        Ok((r.parse::<State>("state")?, r.parse::<i32>("year")?))
    })?;
    Ok(CoverageMask {
        cells: cells.into_iter().collect(),
    })
}

/// Panel plus the two annual series that accompany it.
#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub panel: Panel,
    pub deflator: DeflatorSeries,
    pub min_wage: MinWageSeries,
}

/// Parses and validates the four input sources. The deflator's reference year
/// defaults to its last year; use [`DeflatorSeries::with_reference`] to change it.
pub fn load_panel<A: Read, B: Read, C: Read, D: Read>(
    persons: A,
    jobs: B,
    deflator: C,
    min_wage: D,
) -> Result<LoadedPanel> {
    let panel = Panel::from_records(read_persons(persons)?, read_jobs(jobs)?)?;
    let index = read_year_series("deflator", deflator, "index")?;
    let reference = *index
        .keys()
        .next_back()
        .ok_or(Error::Empty("deflator series"))?;
    Ok(LoadedPanel {
        panel,
        deflator: DeflatorSeries::new(index, reference)?,
        min_wage: read_min_wage(min_wage)?,
    })
}

/// Loads `persons.csv`, `jobs.csv`, `deflator.csv`, `minwage.csv` and, when
/// present, `coverage_mask.csv` from a directory.
pub fn load_panel_dir(dir: &Path) -> Result<(LoadedPanel, CoverageMask)> {
    let open = |name: &str| File::open(dir.join(name));
    let loaded = load_panel(
        open("persons.csv")?,
        open("jobs.csv")?,
        open("deflator.csv")?,
        open("minwage.csv")?,
    )?;
    let mask = match open("coverage_mask.csv") {
        Ok(f) => read_coverage_mask(f)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => CoverageMask::default(),
        Err(e) => return Err(e.into()),
    };
    Ok((loaded, mask))
}

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn write_persons<W: Write>(out: W, persons: &[PersonRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PERSONS_HEADER)?;
    for p in persons {
        w.write_record([
            p.person_id.clone(),
            p.sex.to_string(),
            p.race_eth.to_string(),
            (p.foreign_born as u8).to_string(),
            p.birth_year.to_string(),
            opt_str(&p.death_year),
            (p.ssn_active as u8).to_string(),
            opt_str(&p.education),
            p.state.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jobs<W: Write>(out: W, jobs: &[JobYearRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(JOBS_HEADER)?;
    for j in jobs {
        w.write_record([
            j.person_id.clone(),
            j.employer_id.clone(),
            j.year.to_string(),
            j.q_earnings[0].to_string(),
            j.q_earnings[1].to_string(),
            j.q_earnings[2].to_string(),
            j.q_earnings[3].to_string(),
            j.industry_sector.to_string(),
            j.state.to_string(),
            opt_str(&j.hours),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_deflator<W: Write>(out: W, d: &DeflatorSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["year", "index"])?;
    for (y, v) in &d.index {
        w.write_record([y.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_min_wage<W: Write>(out: W, m: &MinWageSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["year", "min_wage"])?;
    for (y, v) in &m.wage {
        w.write_record([y.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_coverage_mask<W: Write>(out: W, mask: &CoverageMask) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state", "year"])?;
    for (s, y) in &mask.cells {
        w.write_record([s.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Formats an optional float for CSV output; missing becomes an empty field.
pub fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => x.to_string(),
        _ => String::new(),
    }
}

/// Minimal CSV table writer with a fixed header, used for every output file.
pub struct CsvOut<W: Write> {
    w: csv::Writer<W>,
    width: usize,
}

impl<W: Write> CsvOut<W> {
    pub fn new(out: W, header: &[&str]) -> Result<Self> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        Ok(Self {
            w,
            width: header.len(),
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let rec: csv::ByteRecord = fields.into_iter().collect();
        if rec.len() != self.width {
            return Err(Error::Other(format!(
                "row has {} fields, header has {}",
                rec.len(),
                self.width
            )));
        }
        self.w.write_byte_record(&rec)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

impl CsvOut<File> {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        Self::new(File::create(path)?, header)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PERSONS: &str = "person_id,sex,race_eth,foreign_born,birth_year,death_year,ssn_active,education,state
p1,male,WhiteNH,0,1970,,1,HS,CA
p2,female,AsianNH,1,1975,2010,1,,NY
";

    #[test]
    fn loads_small_panel() {
        let jobs = "person_id,employer_id,year,q1,q2,q3,q4,industry_sector,state,hours
p1,f1,2005,1,1,1,1,E,CA,
p1,f2,2005,0,0,5000,0,P,CA,400
p2,f1,2006,3,0,0,0,E,NY,
";
        let defl = "year,index\n2005,90\n2006,100\n";
        let mw = "year,min_wage\n2005,5.15\n2006,5.15\n";
        let lp = load_panel(PERSONS.as_bytes(), jobs.as_bytes(), defl.as_bytes(), mw.as_bytes())
            .unwrap();
        assert_eq!(lp.panel.persons().len(), 2);
        assert_eq!(lp.panel.jobs().len(), 3);
        assert_eq!(lp.deflator.reference_year, 2006);
        assert_eq!(lp.panel.person(1).death_year, Some(2010));
        assert_eq!(lp.panel.jobs()[1].hours, Some(400.0));
    }

    #[test]
    fn schema_error_names_row_and_column() {
        let jobs = "person_id,employer_id,year,q1,q2,q3,q4,industry_sector,state,hours
p1,f1,2005,1,-1,1,1,E,CA,
";
        let err = read_jobs(jobs.as_bytes()).unwrap_err();
        match err {
            Error::Schema { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "q2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_sector_rejected() {
        let jobs = "person_id,employer_id,year,q1,q2,q3,q4,industry_sector,state,hours
p1,f1,2005,1,1,1,1,Z,CA,
";
        assert!(matches!(
            read_jobs(jobs.as_bytes()),
            Err(Error::Schema { ref column, .. }) if column == "industry_sector"
        ));
    }

    #[test]
    fn persons_round_trip() {
        let ps = read_persons(PERSONS.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_persons(&mut buf, &ps).unwrap();
        assert_eq!(read_persons(buf.as_slice()).unwrap(), ps);
    }
}
