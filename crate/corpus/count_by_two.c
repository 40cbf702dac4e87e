/*@ requires 0 <= n; */
int count_by_two(int n) {
    int i = 0;
    while (i < n) {
        i = i + 2;
    }
    /*@ assert i >= n; */
    return i;
}
