/**
 * Self-training comparison mirroring the backend demo: a seed model
 * trained on a small labeled split decodes N-best lists for an unlabeled
 * split, and one model per supervision condition (1-best pseudo-labels,
 * confusion-network graphs with unit or probabilistic weights at several
 * pruning levels, oracle selection) is retrained from the same
 * initialization. Reported numbers are corpus label error rates.
 *
 * Config files use the same key=value schema as the backend demo, so one
 * file can drive both sides for comparison. All graphs, losses, decodes,
 * and oracle rates come from the backend; datasets are drawn from this
 * package's own PRNG.
 */

import {
    DEFAULT_TASK,
    TaskConfig,
    Utterance,
    generateDataset,
    taskTokens,
    uttTokens,
    validateTask,
} from './data.js';
import { BLANK_TOKEN, NBest, formatFloat } from './formats.js';
import { levenshtein } from './metrics.js';
import {
    DEFAULT_OPTIMIZER,
    FrameModel,
    OptimizerConfig,
    TrainPair,
    Weights,
    corpusLer,
    train,
} from './model.js';
import { PrimaryClient } from './primary.js';

export interface DemoConfig {
    seed: number;
    task: TaskConfig;
    nLabeled: number;
    nUnlabeled: number;
    nDev: number;
    nTest: number;
    hidden: number;
    stride: number;
    lr: number;
    decay: number;
    batchSize: number;
    seedEpochs: number;
    retrainEpochs: number;
    nbest: number;
    beam: number;
    mu: number;
    etas: number[];
    labeledRepeats: number;
    workers: number;
}

export const DEFAULT_CONFIG: DemoConfig = {
    seed: 0,
    task: DEFAULT_TASK,
    nLabeled: 200,
    nUnlabeled: 800,
    nDev: 100,
    nTest: 200,
    hidden: 64,
    stride: 1,
    lr: DEFAULT_OPTIMIZER.lr,
    decay: DEFAULT_OPTIMIZER.decay,
    batchSize: DEFAULT_OPTIMIZER.batchSize,
    seedEpochs: 30,
    retrainEpochs: 10,
    nbest: 20,
    beam: 24,
    mu: 0.6,
    etas: [0.0, 0.02, 0.05],
    labeledRepeats: 1,
    workers: 1,
};

const TASK_KEYS: Record<string, keyof TaskConfig> = {
    alphabet_size: 'alphabetSize',
    min_len: 'minLen',
    max_len: 'maxLen',
    min_dur: 'minDur',
    max_dur: 'maxDur',
    noise: 'noise',
};

const INT_KEYS: Record<string, keyof DemoConfig> = {
    seed: 'seed',
    n_labeled: 'nLabeled',
    n_unlabeled: 'nUnlabeled',
    n_dev: 'nDev',
    n_test: 'nTest',
    hidden: 'hidden',
    stride: 'stride',
    batch_size: 'batchSize',
    seed_epochs: 'seedEpochs',
    retrain_epochs: 'retrainEpochs',
    nbest: 'nbest',
    beam: 'beam',
    labeled_repeats: 'labeledRepeats',
    workers: 'workers',
};

const FLOAT_KEYS: Record<string, keyof DemoConfig> = {
    lr: 'lr',
    decay: 'decay',
    mu: 'mu',
};

function parseInteger(key: string, raw: string): number {
    const x = Number(raw);
    if (!Number.isInteger(x)) throw new Error(`config key ${key}: bad int ${raw}`);
    return x;
}

function parseFloatValue(key: string, raw: string): number {
    const x = Number(raw);
    if (Number.isNaN(x)) throw new Error(`config key ${key}: bad float ${raw}`);
    return x;
}

/** Same key schema as the backend demo config; unknown keys are rejected. */
export function configFromMapping(mapping: Map<string, string>): DemoConfig {
    const config: DemoConfig = { ...DEFAULT_CONFIG, task: { ...DEFAULT_TASK } };
    for (const [key, raw] of mapping) {
        if (key in TASK_KEYS) {
            config.task[TASK_KEYS[key]] = key === 'noise'
                ? parseFloatValue(key, raw) : parseInteger(key, raw);
        } else if (key in INT_KEYS) {
            (config as unknown as Record<string, number>)[INT_KEYS[key]] =
                parseInteger(key, raw);
        } else if (key in FLOAT_KEYS) {
            (config as unknown as Record<string, number>)[FLOAT_KEYS[key]] =
                parseFloatValue(key, raw);
        } else if (key === 'etas') {
            config.etas = raw.replace(/,/g, ' ').split(/\s+/)
                .filter((s) => s.length)
                .map((s) => parseFloatValue('etas', s));
        } else {
            throw new Error(`unknown config key ${JSON.stringify(key)}`);
        }
    }
    validateTask(config.task);
    return config;
}

export interface ConditionResult {
    name: string;
    testLer: number;
    oracleLer: number | null;
    density: number | null;
    skipped: number;
}

export interface Report {
    conditions: ConditionResult[];
    table1: Map<string, number>;
}

export function condition(report: Report, name: string): ConditionResult {
    const row = report.conditions.find((r) => r.name === name);
    if (!row) throw new Error(`no condition ${JSON.stringify(name)}`);
    return row;
}

function fmtCell(x: number | null): string {
    return x === null ? '-' : formatFloat(Math.round(x * 1e6) / 1e6);
}

export function reportToTsv(report: Report): string {
    const rows = ['condition\ttest_ler\toracle_ler\tdensity\tskipped'];
    for (const r of report.conditions) {
        rows.push(`${r.name}\t${fmtCell(r.testLer)}\t${fmtCell(r.oracleLer)}` +
                  `\t${fmtCell(r.density)}\t${r.skipped}`);
    }
    return rows.join('\n') + '\n';
}

export function reportSummary(report: Report): string {
    const width = Math.max(...report.conditions.map((r) => r.name.length));
    const lines = ['Self-training comparison (lower test LER is better)', ''];
    for (const r of report.conditions) {
        let extra = '';
        if (r.oracleLer !== null) extra = `  oracle LER ${r.oracleLer.toFixed(4)}`;
        if (r.density !== null) extra += `  density ${r.density.toFixed(3)}`;
        lines.push(`  ${r.name.padEnd(width)}  test LER ` +
                   `${r.testLer.toFixed(4)}${extra}`);
    }
    lines.push('');
    lines.push('Supervision quality on the unlabeled split (oracle LER):');
    for (const [name, value] of report.table1) {
        lines.push(`  ${name.padEnd(12)} ${value.toFixed(4)}`);
    }
    return lines.join('\n') + '\n';
}

function singleHypLists(utts: Utterance[],
                        pick: (i: number) => string[]): NBest[] {
    return utts.map((u, i) => ({
        uttId: u.uttId,
        hyps: [{ tokens: pick(i), score: 0 }],
    }));
}

export function selfTrainExperiment(config: DemoConfig,
                                    client: PrimaryClient): Report {
    const task = config.task;
    const tokens = taskTokens(task);
    const symbols = [BLANK_TOKEN, ...tokens];
    const base = config.seed * 1000;
    const labeled = generateDataset(task, config.nLabeled, base + 1, 'lab');
    const unlabeled = generateDataset(task, config.nUnlabeled, base + 2, 'unl');
    const test = generateDataset(task, config.nTest, base + 3, 'tst');
    const dev = config.nDev > 0
        ? generateDataset(task, config.nDev, base + 6, 'dev') : undefined;

    const opt: OptimizerConfig = {
        lr: config.lr,
        clipNorm: DEFAULT_OPTIMIZER.clipNorm,
        batchSize: config.batchSize,
        shuffleSeed: base + 5,
        decay: config.decay,
    };
    const init = FrameModel.init(task.alphabetSize, config.hidden,
                                 symbols.length, base + 4, config.stride);
    const initWeights: Weights = init.snapshot();
    init.dispose();

    // a single-hypothesis list builds to exactly the linear graph
    const linearGraphs = (lists: NBest[]): Map<string, string> => {
        const built = client.buildGraphs(
            lists.filter((nb) => nb.hyps[0].tokens.length > 0), tokens,
            { mu: config.mu, eta: 0 });
        return new Map([...built].map(([utt, g]) => [utt, g.graphText]));
    };

    const trainModel = (pairs: TrainPair[], epochs: number): FrameModel => {
        const model = new FrameModel(initWeights);
        train(model, pairs, epochs, opt, client, symbols, dev);
        return model;
    };

    const labeledGraphs = linearGraphs(
        singleHypLists(labeled, (i) => uttTokens(labeled[i], tokens)));
    const labeledPairs: TrainPair[] = labeled.map((u) => ({
        features: u.features,
        graphText: labeledGraphs.get(u.uttId)!,
    }));

    const seedModel = trainModel(labeledPairs, config.seedEpochs);
    const report: Report = {
        conditions: [{
            name: 'seed', testLer: corpusLer(seedModel, test),
            oracleLer: null, density: null, skipped: 0,
        }],
        table1: new Map(),
    };

    const nbests = client.decode(
        unlabeled.map((u) => ({ uttId: u.uttId, logits: seedModel.logits(u.features) })),
        symbols, config.nbest, config.beam);
    seedModel.dispose();
    if (nbests.length !== unlabeled.length) {
        throw new Error('decoder returned a different number of utterances');
    }
    const refs: [string, string[]][] = unlabeled.map(
        (u) => [u.uttId, uttTokens(u, tokens)]);
    const refByUtt = new Map(refs);

    const retrain = (pseudo: TrainPair[]): number => {
        const pool: TrainPair[] = [];
        for (let r = 0; r < config.labeledRepeats; r++) pool.push(...labeledPairs);
        pool.push(...pseudo);
        const model = trainModel(pool, config.retrainEpochs);
        const ler = corpusLer(model, test);
        model.dispose();
        return ler;
    };

    const linearCondition = (name: string, oracle: number,
                             pick: (i: number) => string[]): void => {
        const lists = singleHypLists(unlabeled, pick);
        const graphs = linearGraphs(lists);
        const pairs: TrainPair[] = [];
        let skipped = 0;
        for (const u of unlabeled) {
            const graphText = graphs.get(u.uttId);
            if (graphText === undefined) skipped += 1;
            else pairs.push({ features: u.features, graphText });
        }
        report.conditions.push({
            name, testLer: retrain(pairs), oracleLer: oracle,
            density: null, skipped,
        });
    };

    // empty hypotheses count as fully wrong in the oracle rate, so the
    // unfiltered single-hypothesis lists give the condition's oracle
    const top1Lists = singleHypLists(unlabeled, (i) => nbests[i].hyps[0].tokens);
    const ler1best = client.oracleLerNbest(top1Lists, refs);
    const lerNbest = client.oracleLerNbest(nbests, refs);
    linearCondition('1best', ler1best, (i) => nbests[i].hyps[0].tokens);

    // fixed row names, independent of the configured list size, so reports
    // from different runs line up column-for-column with the backend's
    const table1: [string, number][] = [['1best', ler1best],
                                        ['20best', lerNbest]];
    for (const eta of config.etas) {
        const etaTag = formatFloat(eta);
        const probBuilt = client.buildGraphs(nbests, tokens,
                                             { mu: config.mu, eta });
        const unitBuilt = client.buildGraphs(nbests, tokens,
                                             { mu: config.mu, eta, unitWeights: true });
        const graphTexts = new Map(
            [...probBuilt].map(([utt, g]) => [utt, g.graphText]));
        const graphLer = client.oracleLerGraphs(graphTexts, refs);
        table1.push([`cn-eta${etaTag}`, graphLer]);
        const densities = [...probBuilt.values()].map((g) => g.density);
        const density = densities.reduce((a, b) => a + b, 0) / densities.length;
        for (const [label, built] of [['unit', unitBuilt],
                                      ['prob', probBuilt]] as const) {
            const pairs: TrainPair[] = unlabeled.map((u) => ({
                features: u.features,
                graphText: built.get(u.uttId)!.graphText,
            }));
            report.conditions.push({
                name: `cn-${label}-eta${etaTag}`, testLer: retrain(pairs),
                oracleLer: graphLer, density, skipped: 0,
            });
        }
    }

    linearCondition('oracle-20best', lerNbest, (i) => {
        const ref = refByUtt.get(nbests[i].uttId)!;
        let best = nbests[i].hyps[0].tokens;
        let bestDist = levenshtein(best, ref);
        for (const h of nbests[i].hyps.slice(1)) {
            const d = levenshtein(h.tokens, ref);
            if (d < bestDist) { best = h.tokens; bestDist = d; }
        }
        return best;
    });

    report.table1 = new Map(table1);
    return report;
}
