import { TokenCollisionError } from "./errors.js";

export const END_OF_ANSWER = "<eoa>";
export const UNKNOWN = "<unk>";

/** Reserved literal for the i-th token of a role, per the adapter contract. */
export function roleTokenLiteral(role: string, index: number): string {
  return `<|role:${role}:${index}|>`;
}

/**
 * Word-level tokenizer over whitespace-separated chunks. The base vocabulary
 * comes from the training texts; role tokens are appended afterwards so the
 * expanded ids form one contiguous block at the top of the id space.
 */
export class Tokenizer {
  private ids = new Map<string, number>();
  private literals: string[] = [];

  constructor(baseTokens: Iterable<string>) {
    this.add(UNKNOWN);
    this.add(END_OF_ANSWER);
    for (const token of baseTokens) {
      if (!this.ids.has(token)) this.add(token);
    }
  }

  static fromTexts(texts: Iterable<string>): Tokenizer {
    const seen = new Set<string>();
    for (const text of texts) {
      for (const token of text.split(/\s+/)) {
        if (token) seen.add(token);
      }
    }
    return new Tokenizer([...seen].sort());
  }

  private add(literal: string): number {
    const id = this.literals.length;
    this.ids.set(literal, id);
    this.literals.push(literal);
    return id;
  }

  get size(): number {
    return this.literals.length;
  }

  get endOfAnswerId(): number {
    return this.ids.get(END_OF_ANSWER)!;
  }

  literal(id: number): string {
    return this.literals[id];
  }

  encode(text: string): number[] {
    const unk = this.ids.get(UNKNOWN)!;
    return text
      .split(/\s+/)
      .filter((t) => t.length > 0)
      .map((t) => this.ids.get(t) ?? unk);
  }

  /** Append reserved role tokens; collisions with existing literals abort. */
  addRoleTokens(roles: string[], tokensPerRole: number): Map<string, number[]> {
    const byRole = new Map<string, number[]>();
    for (const role of roles) {
      const ids: number[] = [];
      for (let i = 0; i < tokensPerRole; i++) {
        const literal = roleTokenLiteral(role, i);
        if (this.ids.has(literal)) throw new TokenCollisionError(literal);
        ids.push(this.add(literal));
      }
      byRole.set(role, ids);
    }
    return byRole;
  }
}
