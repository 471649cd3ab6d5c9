"""Regenerates the toy politics fixtures in this directory (deterministic)."""
import json, random, os
rng = random.Random(20241016)
OUT = os.path.dirname(os.path.abspath(__file__))
NAMES = {
 "politician": ["Angela Merkel","Barack Obama","Winston Churchill","Jacinda Ardern","Nelson Mandela","Olof Palme","Indira Gandhi","Charles de Gaulle"],
 "person": ["Albert Einstein","Marie Curie","Leo Tolstoy","Frida Kahlo","Alan Turing","Ada Lovelace"],
 "country": ["Germany","France","New Zealand","South Africa","India","Sweden","Brazil"],
 "city": ["Berlin","Paris","Wellington","Cape Town","Mumbai","Stockholm"],
 "party": ["Labour Party","Christian Democratic Union","Social Democrats","National Party","Green Party"],
 "election": ["2019 general election","1994 election","presidential election","European Parliament election"],
 "ideology": ["socialism","liberalism","conservatism","environmentalism"],
}
TEMPLATES = [
 "{politician} of the {party} spoke in {city} about {ideology} .",
 "{person} met {politician} in {country} before the {election} .",
 "The {party} won the {election} in {country} .",
 "{politician} criticized {ideology} during a visit to {city} , {country} .",
 "{person} , a writer from {city} , praised {politician} .",
 "Supporters of {ideology} rallied for the {party} in {country} .",
]
SOURCE = {"politician":"PER","person":"PER","country":"LOC","city":"LOC","party":"ORG","election":"MISC","ideology":"MISC"}

def make(n):
    out=[]
    for i in range(n):
        t = rng.choice(TEMPLATES)
        toks=[]; ents=[]
        for piece in t.split():
            if piece.startswith("{"):
                ty=piece[1:-1]; name=rng.choice(NAMES[ty]).split()
                ents.append((len(toks), len(toks)+len(name), ty)); toks+=name
            else:
                toks.append(piece)
        out.append((toks, ents))
    return out

def bio(toks, ents, mapfn=lambda t:t):
    tags=["O"]*len(toks)
    for s,e,t in ents:
        tags[s]="B-"+mapfn(t)
        for k in range(s+1,e): tags[k]="I-"+mapfn(t)
    return tags

def surface(toks,s,e): return " ".join(toks[s:e])

src=make(50); train=make(100); test=make(50)
# source corpus: CoNLL-style 4 columns, two documents, ideology is MISC in the source world
with open(f"{OUT}/source_train.conll","w") as f:
    for i,(toks,ents) in enumerate(src):
        if i in (0,25): f.write("-DOCSTART- -X- -X- O\n\n")
        for tok,tag in zip(toks,bio(toks,ents,lambda t:SOURCE[t])):
            f.write(f"{tok} NN O {tag}\n")
        f.write("\n")
for name,data in (("target_train.bio",train),("target_test.bio",test)):
    with open(f"{OUT}/{name}","w") as f:
        for toks,ents in data:
            for tok,tag in zip(toks,bio(toks,ents)): f.write(f"{tok}\t{tag}\n")
            f.write("\n")
# source model on target train: ideology is never recognized; every 5th politician leaks to ORG
with open(f"{OUT}/source_tagger.jsonl","w") as f:
    pol=0
    for i,(toks,ents) in enumerate(train):
        lines=[]
        for s,e,t in ents:
            if t=="ideology": continue
            st=SOURCE[t]
            if t=="politician":
                pol+=1
                if pol%5==0: st="ORG"
            lines.append(f"{st} : {surface(toks,s,e)}")
        f.write(json.dumps({"id":f"train:{i}","label_text":"\n".join(lines) or "none"})+"\n")
MAP={"politician":"PER","person":"PER","country":"LOC","city":"LOC","party":"ORG","election":"MISC","ideology":"miscellaneous"}
# target model on test: person/politician and city/country confusions, one unknown type, some misses
with open(f"{OUT}/target_tagger.jsonl","w") as f, open(f"{OUT}/llm_rules.json","w") as g:
    rules=[]; k=0
    for i,(toks,ents) in enumerate(test):
        lines=[]
        text=" ".join(toks)
        for s,e,t in ents:
            k+=1
            sf=surface(toks,s,e); yt=t
            if k%13==0: continue
            if t=="politician" and k%3==0: yt="person"
            if t=="person" and k%4==0: yt="politician"
            if t=="city" and k%5==0: yt="country"
            if t=="politician" and k%17==0: yt="diplomat"
            lines.append(f"{MAP[t]} : {sf} => {yt}")
            rules.append({"contains":f"Sentence: {text}\nEntity: {sf}\n","reply":t})
        f.write(json.dumps({"id":f"test:{i}","label_text":"\n".join(lines) or "none"})+"\n")
    # zero-shot annotation prompts end with the sentence; answer with gold labels
    for toks,ents in train:
        text=" ".join(toks)
        reply="\n".join(f"{t} : {surface(toks,s,e)}" for s,e,t in ents) or "none"
        rules.append({"contains":f"Sentence: {text}","reply":reply})
    json.dump({"rules":rules,"default":"I am not sure."},g,indent=1); g.write("\n")
