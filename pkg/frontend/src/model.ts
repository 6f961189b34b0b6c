/**
 * Frame-level tanh MLP and its SGD training loop.
 *
 * Losses and gradients with respect to the output logits come from the
 * backend through the custom-gradient op; everything from the logits down
 * to the weights is ordinary TensorFlow.js autodiff.
 */

import * as tf from '@tensorflow/tfjs';

import { gtcLoss } from './gtcLoss.js';
import { greedyLabels, levenshtein } from './metrics.js';
import { PrimaryClient } from './primary.js';
import { Rng } from './prng.js';
import { Utterance } from './data.js';

export interface Weights {
    w1: number[][];
    b1: number[];
    w2: number[][];
    b2: number[];
    stride: number;
}

export class FrameModel {
    readonly w1: tf.Variable<tf.Rank.R2>;
    readonly b1: tf.Variable<tf.Rank.R1>;
    readonly w2: tf.Variable<tf.Rank.R2>;
    readonly b2: tf.Variable<tf.Rank.R1>;
    readonly stride: number;

    constructor(weights: Weights) {
        this.w1 = tf.variable(tf.tensor2d(weights.w1));
        this.b1 = tf.variable(tf.tensor1d(weights.b1));
        this.w2 = tf.variable(tf.tensor2d(weights.w2));
        this.b2 = tf.variable(tf.tensor1d(weights.b2));
        this.stride = weights.stride;
    }

    static init(featureDim: number, hidden: number, nSymbols: number,
                seed: number, stride = 1): FrameModel {
        const rng = new Rng(seed);
        const mat = (rows: number, cols: number, scale: number) =>
            Array.from({ length: rows },
                       () => Array.from({ length: cols },
                                        () => scale * rng.normal()));
        return new FrameModel({
            w1: mat(featureDim, hidden, 1 / Math.sqrt(featureDim)),
            b1: new Array<number>(hidden).fill(0),
            w2: mat(hidden, nSymbols, 1 / Math.sqrt(hidden)),
            b2: new Array<number>(nSymbols).fill(0),
            stride,
        });
    }

    get variables(): tf.Variable[] {
        return [this.w1, this.b1, this.w2, this.b2];
    }

    snapshot(): Weights {
        return {
            w1: this.w1.arraySync() as number[][],
            b1: this.b1.arraySync() as number[],
            w2: this.w2.arraySync() as number[][],
            b2: this.b2.arraySync() as number[],
            stride: this.stride,
        };
    }

    restore(weights: Weights): void {
        this.w1.assign(tf.tensor2d(weights.w1));
        this.b1.assign(tf.tensor1d(weights.b1));
        this.w2.assign(tf.tensor2d(weights.w2));
        this.b2.assign(tf.tensor1d(weights.b2));
    }

    dispose(): void {
        for (const v of this.variables) v.dispose();
    }

    outputFrames(numInputFrames: number): number {
        return Math.ceil(numInputFrames / this.stride);
    }

    private strided(features: number[][]): number[][] {
        if (this.stride === 1) return features;
        const rows: number[][] = [];
        for (let i = 0; i < features.length; i += this.stride) rows.push(features[i]);
        return rows;
    }

    /** [outputFrames, nSymbols] logits; part of the autodiff graph */
    logitsTensor(features: number[][]): tf.Tensor2D {
        const x = tf.tensor2d(this.strided(features));
        const h = tf.tanh(tf.add(tf.matMul(x, this.w1), this.b1));
        return tf.add(tf.matMul(h, this.w2), this.b2) as tf.Tensor2D;
    }

    logits(features: number[][]): number[][] {
        return tf.tidy(
            () => this.logitsTensor(features).arraySync() as number[][]);
    }
}

export function corpusLer(model: FrameModel, utts: Utterance[]): number {
    let dist = 0;
    let total = 0;
    for (const u of utts) {
        dist += levenshtein(greedyLabels(model.logits(u.features)), u.labels);
        total += u.labels.length;
    }
    return dist / total;
}

export interface OptimizerConfig {
    lr: number;
    clipNorm: number;
    batchSize: number;
    shuffleSeed: number;
    decay: number;
}

export const DEFAULT_OPTIMIZER: OptimizerConfig = {
    lr: 0.15,
    clipNorm: 5.0,
    batchSize: 8,
    shuffleSeed: 0,
    decay: 1.0,
};

export interface TrainPair {
    features: number[][];
    graphText: string;
}

export interface TrainStats {
    epochLosses: number[];
    devLers: number[];
    bestEpoch: number;
    /** training items whose graph admits no path of their frame count */
    infeasible: number;
}

/**
 * Mini-batch SGD on the graph loss, mutating the model in place.
 *
 * Infeasible pairs contribute nothing to any update; batch gradients are
 * averaged over the feasible items and clipped by global norm. With a dev
 * set the model ends at the epoch snapshot with the best dev error rate.
 */
export function train(model: FrameModel, corpus: TrainPair[], epochs: number,
                      opt: OptimizerConfig, client: PrimaryClient,
                      symbols: string[], dev?: Utterance[]): TrainStats {
    if (!corpus.length) throw new Error('no training pairs');
    const stats: TrainStats = {
        epochLosses: [], devLers: [], bestEpoch: -1, infeasible: 0,
    };
    const rng = new Rng(opt.shuffleSeed);
    const everInfeasible = new Set<number>();
    let best: { ler: number; weights: Weights } | null = null;
    let lr = opt.lr;

    for (let epoch = 0; epoch < epochs; epoch++) {
        const order = rng.permutation(corpus.length);
        const epochLosses: number[] = [];
        for (let lo = 0; lo < order.length; lo += opt.batchSize) {
            const batch = order.slice(lo, lo + opt.batchSize);
            const items = batch.map((i) => corpus[i]);
            const lengths = items.map(
                (it) => model.outputFrames(it.features.length));
            const maxT = Math.max(...lengths);
            let raw: number[] = [];

            const { value, grads } = tf.variableGrads(() => {
                const padded = items.map((it, j) => {
                    const lg = model.logitsTensor(it.features);
                    return lg.pad([[0, maxT - lengths[j]], [0, 0]]);
                });
                const losses = gtcLoss(client, {
                    graphs: items.map((it) => it.graphText),
                    symbols,
                    lengths,
                    onLosses: (l) => { raw = l; },
                }, tf.stack(padded) as tf.Tensor3D);
                // mask infeasible items so the batch mean stays finite
                const mask = tf.tensor1d(
                    raw.map((v) => (Number.isFinite(v) ? 1 : 0)), 'bool');
                const used = raw.filter(Number.isFinite).length;
                const safe = tf.where(mask, losses, tf.zerosLike(losses));
                return tf.div(tf.sum(safe), Math.max(used, 1)) as tf.Scalar;
            }, model.variables);
            value.dispose();

            raw.forEach((v, j) => {
                if (Number.isFinite(v)) epochLosses.push(v);
                else everInfeasible.add(batch[j]);
            });
            const used = raw.filter(Number.isFinite).length;
            const gradList = model.variables.map((v) => grads[v.name]);
            if (used > 0) {
                tf.tidy(() => {
                    let sq = 0;
                    for (const g of gradList) {
                        sq += tf.sum(tf.square(g)).arraySync() as number;
                    }
                    const norm = Math.sqrt(sq);
                    const scale =
                        lr * (norm > opt.clipNorm ? opt.clipNorm / norm : 1);
                    model.variables.forEach((v, i) => {
                        v.assign(tf.sub(v, tf.mul(gradList[i], scale)));
                    });
                });
            }
            tf.dispose(grads);
        }
        lr *= opt.decay;
        stats.epochLosses.push(epochLosses.length
            ? epochLosses.reduce((a, b) => a + b, 0) / epochLosses.length
            : Infinity);
        if (dev) {
            const ler = corpusLer(model, dev);
            stats.devLers.push(ler);
            if (best === null || ler < best.ler) {
                best = { ler, weights: model.snapshot() };
                stats.bestEpoch = epoch;
            }
        }
    }
    if (epochs > 0 && everInfeasible.size === corpus.length) {
        throw new Error('no feasible training pairs');
    }
    stats.infeasible = everInfeasible.size;
    if (best) model.restore(best.weights);
    return stats;
}
