import { defineConfig } from "vitest/config";

// Integration run against a live service; requires UI_E2E_BASE_URL.
export default defineConfig({
  test: {
    include: ["tests_e2e/**/*.e2e.ts"],
    environment: "node",
    testTimeout: 30_000,
    hookTimeout: 30_000,
  },
});
