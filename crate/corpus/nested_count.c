/*@ requires 0 <= n <= 2 && 0 <= m <= 2; */
int nested_count(int n, int m) {
    int i = 0;
    int c = 0;
    while (i < n) {
        int j = 0;
        while (j < m) {
            j = j + 1;
            c = c + 1;
        }
        i = i + 1;
    }
    /*@ assert c >= 0; */
    return c;
}
