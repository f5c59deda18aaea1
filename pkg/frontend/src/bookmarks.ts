/**
 * Recipe-timeline bookmarks, persisted per recipe in browser storage. The
 * storage backend is injected so the model is testable without a DOM.
 */

export interface Bookmark {
  t: number;
  label: string;
}

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export class BookmarkStore {
  constructor(
    private readonly storage: StorageLike,
    private readonly keyPrefix = "openchamber.bookmarks.",
  ) {}

  list(recipeId: string): Bookmark[] {
    const raw = this.storage.getItem(this.keyPrefix + recipeId);
    if (!raw) return [];
    try {
      const parsed = JSON.parse(raw) as Bookmark[];
      return parsed
        .filter((b) => typeof b.t === "number" && typeof b.label === "string")
        .sort((a, b) => a.t - b.t);
    } catch {
      return [];
    }
  }

  add(recipeId: string, bookmark: Bookmark): Bookmark[] {
    const bookmarks = this.list(recipeId).filter((b) => b.t !== bookmark.t);
    bookmarks.push(bookmark);
    bookmarks.sort((a, b) => a.t - b.t);
    this.storage.setItem(this.keyPrefix + recipeId, JSON.stringify(bookmarks));
    return bookmarks;
  }

  remove(recipeId: string, t: number): Bookmark[] {
    const bookmarks = this.list(recipeId).filter((b) => b.t !== t);
    this.storage.setItem(this.keyPrefix + recipeId, JSON.stringify(bookmarks));
    return bookmarks;
  }
}
