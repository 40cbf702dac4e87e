/*@ requires 0 <= n <= 4; */
int countdown(int n) {
    int i = n;
    /*@
      loop invariant n == \at(n, Pre);
      loop invariant i == n + 1;
    */
    while (i > 0) {
        i = i - 1;
    }
    /*@ assert i == 0; */
    return i;
}
