//! Convert small raw exports of each supported benchmark into annotation
//! tables, including the MT-Bench tie-handling variants.

use stableval::ingest::{convert, parse_records_csv, ConversionScheme, DatasetKind};

const MTBENCH: &str = "question_id,turn,model_a,model_b,judge,winner
81,1,gpt-4,vicuna-13b,author_0,model_a
81,1,gpt-4,vicuna-13b,author_1,tie
82,1,vicuna-13b,gpt-4,author_0,model_b
";
const CONVABUSE: &str = "item_id,agent_id,annotator_id,severity
c1,bot_a,r1,1
c1,bot_a,r2,-1
c2,bot_a,r1,-3
";
const QAGS: &str = "item_id,dataset,annotator_id,label
s1,cnndm,w1,1
s1,cnndm,w2,0
s2,xsum,w1,0
";
const MSLR: &str = "item_id,agent_id,annotator_id,fluency,pio,direction
r1,bart,a1,2,1,1
r1,bart,a2,1,0,1
";

fn main() -> stableval::Result<()> {
    let mt = parse_records_csv(MTBENCH.as_bytes())?;
    for scheme in [
        "baseline",
        "drop_ties",
        "tie_to_win",
        "tie_to_loss",
        "tie_weight:0.25",
    ] {
        let scheme: ConversionScheme = scheme.parse()?;
        let converted = convert(DatasetKind::Mtbench, &mt, scheme)?;
        println!("mtbench [{scheme}] credit {:?}", converted.scheme.credit());
        for a in &converted.annotations {
            println!(
                "  {:<28} {:<11} {:<9} {}",
                a.item_id, a.agent_id, a.annotator_id, a.label
            );
        }
    }

    for (kind, text) in [
        (DatasetKind::Convabuse, CONVABUSE),
        (DatasetKind::Qags, QAGS),
        (DatasetKind::Mslr, MSLR),
    ] {
        let records = parse_records_csv(text.as_bytes())?;
        let converted = convert(kind, &records, ConversionScheme::Baseline)?;
        println!("{kind:?}: credit {:?}", converted.scheme.credit());
        for a in &converted.annotations {
            println!(
                "  {:<6} {:<6} {:<4} {}",
                a.item_id, a.agent_id, a.annotator_id, a.label
            );
        }
    }
    Ok(())
}
