import * as fs from 'node:fs';
import * as path from 'node:path';
import { fileURLToPath } from 'node:url';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { parseAlphabet } from '../src/formats.js';
import { greedyLabels, levenshtein } from '../src/metrics.js';
import {
    DEFAULT_OPTIMIZER,
    FrameModel,
    OptimizerConfig,
    TrainPair,
    corpusLer,
    train,
} from '../src/model.js';
import { PrimaryClient } from '../src/primary.js';
import { Rng } from '../src/prng.js';
import { Utterance, generateDataset } from '../src/data.js';

const FIXTURES = path.join(path.dirname(fileURLToPath(import.meta.url)), 'fixtures');

const symbols = ['<b>',
                 ...parseAlphabet(fs.readFileSync(
                     path.join(FIXTURES, 'alphabet.txt'), 'utf8'))];

function fixtureGraph(name: string): string {
    return fs.readFileSync(
        path.join(FIXTURES, 'cases', name, 'graph.gtc'), 'utf8');
}

function randomFeatures(rng: Rng, t: number): number[][] {
    return Array.from({ length: t },
                      () => Array.from({ length: 4 }, () => rng.normal()));
}

let client: PrimaryClient;

beforeAll(() => {
    client = new PrimaryClient();
});

afterAll(() => {
    client.dispose();
});

describe('metrics plumbing', () => {
    it('computes edit distance', () => {
        expect(levenshtein([1, 2, 3], [1, 2, 3])).toBe(0);
        expect(levenshtein([1, 2, 3], [1, 2, 4])).toBe(1);
        expect(levenshtein([], [1, 2])).toBe(2);
        expect(levenshtein('kitten', 'sitting')).toBe(3);
    });

    it('greedy-decodes with collapse and blank removal', () => {
        expect(greedyLabels([[0, 1, -1], [0, 1, -1], [-5, -6, 9]])).toEqual([1, 2]);
        // a blank between equal symbols separates them
        expect(greedyLabels([[0, 2, 1], [5, 2, 1], [0, 2, 1]])).toEqual([1, 1]);
        expect(greedyLabels([[9, 1, 1]])).toEqual([]);
    });
});

describe('FrameModel', () => {
    it('initializes deterministically from a seed', () => {
        const a = FrameModel.init(4, 6, 5, 7);
        const b = FrameModel.init(4, 6, 5, 7);
        expect(a.snapshot()).toEqual(b.snapshot());
        a.dispose();
        b.dispose();
    });

    it('strides input frames', () => {
        const model = FrameModel.init(4, 6, 5, 7, 2);
        expect(model.outputFrames(5)).toBe(3);
        expect(model.logits(randomFeatures(new Rng(0), 5)).length).toBe(3);
        model.dispose();
    });
});

describe('train', () => {
    const linearAb = () => fixtureGraph('linear-ab');

    function makePairs(n: number, t = 6): TrainPair[] {
        const rng = new Rng(11);
        return Array.from({ length: n }, () => ({
            features: randomFeatures(rng, t),
            graphText: linearAb(),
        }));
    }

    it('leaves weights untouched at zero learning rate', () => {
        const model = FrameModel.init(4, 5, symbols.length, 3);
        const before = model.snapshot();
        const opt: OptimizerConfig = { ...DEFAULT_OPTIMIZER, lr: 0 };
        train(model, makePairs(3), 2, opt, client, symbols);
        expect(model.snapshot()).toEqual(before);
        model.dispose();
    });

    it('reduces the training loss on a learnable task', () => {
        const utts = generateDataset(
            { alphabetSize: 3, minLen: 2, maxLen: 3, minDur: 3, maxDur: 4,
              noise: 0.1 }, 6, 42);
        const tokens = ['a', 'b', 'c'];
        const graphs = client.buildGraphs(
            utts.map((u) => ({
                uttId: u.uttId,
                hyps: [{ tokens: u.labels.map((k) => tokens[k - 1]), score: 0 }],
            })), tokens, { mu: 0.6, eta: 0 });
        const pairs: TrainPair[] = utts.map((u) => ({
            features: u.features,
            graphText: graphs.get(u.uttId)!.graphText,
        }));
        const model = FrameModel.init(3, 12, 4, 9);
        const stats = train(model, pairs, 6,
                            { ...DEFAULT_OPTIMIZER, batchSize: 6 },
                            client, symbols);
        expect(stats.epochLosses[5]).toBeLessThan(stats.epochLosses[0]);
        expect(stats.infeasible).toBe(0);
        model.dispose();
    });

    it('ends on the best dev-error snapshot', () => {
        const dev: Utterance[] = generateDataset(
            { alphabetSize: 4, minLen: 2, maxLen: 3, minDur: 3, maxDur: 4,
              noise: 0.2 }, 4, 5);
        const pairs = makePairs(4);
        const model = FrameModel.init(4, 6, symbols.length, 3);
        const stats = train(model, pairs, 3, DEFAULT_OPTIMIZER, client,
                            symbols, dev);
        expect(stats.devLers.length).toBe(3);
        expect(stats.bestEpoch).toBeGreaterThanOrEqual(0);
        expect(stats.devLers[stats.bestEpoch]).toBe(Math.min(...stats.devLers));
        expect(corpusLer(model, dev)).toBe(stats.devLers[stats.bestEpoch]);
        model.dispose();
    });

    it('skips infeasible pairs and counts them', () => {
        const rng = new Rng(2);
        const pairs: TrainPair[] = [
            { features: randomFeatures(rng, 6), graphText: linearAb() },
            // three mandatory emissions cannot fit into two frames
            { features: randomFeatures(rng, 2),
              graphText: fixtureGraph('infeasible') },
        ];
        const model = FrameModel.init(4, 5, symbols.length, 3);
        const stats = train(model, pairs, 2, DEFAULT_OPTIMIZER, client, symbols);
        expect(stats.infeasible).toBe(1);
        expect(stats.epochLosses.every(Number.isFinite)).toBe(true);
        model.dispose();
    });

    it('raises when nothing is feasible', () => {
        const rng = new Rng(2);
        const pairs: TrainPair[] = [{
            features: randomFeatures(rng, 2),
            graphText: fixtureGraph('infeasible'),
        }];
        const model = FrameModel.init(4, 5, symbols.length, 3);
        expect(() => train(model, pairs, 1, DEFAULT_OPTIMIZER, client, symbols))
            .toThrow(/no feasible/);
        model.dispose();
    });
});
