use std::path::Path;

use msgnn::network::Msgnn;

use crate::settings::load_settings;
use crate::table::Table;
use crate::Result;

pub fn params_table(model: &Msgnn<f32>) -> Table {
    let mut t = Table::new(&["module", "parameters"]);
    for (name, n) in model.breakdown() {
        t.push(vec![name, n.to_string()]);
    }
    t.push(vec!["total".into(), model.scalar_count().to_string()]);
    t
}

pub fn run(config: Option<&Path>, sets: &[String]) -> Result<()> {
    let settings = load_settings(config, sets)?;
    let model = Msgnn::<f32>::new(settings.model)?;
    print!("{}", params_table(&model).to_text());
    Ok(())
}
